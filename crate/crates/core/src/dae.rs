//! Semi-explicit index-1 DAEs
//!
//! ```text
//! ẋ = γ(x, y) + λ σ(t, x, y),   g(x, y) = 0
//! ```
//!
//! and the tangent fields, average wind and seed maps built from them.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::EvalError;
use crate::field::{FieldHandle, VectorField};
use crate::manifold::{ImplicitConstraint, TangentField};

pub const DEFAULT_QUADRATURE_NODES: usize = 64;

#[derive(Debug, Clone)]
pub struct SemiExplicitDae {
    constraint: Arc<ImplicitConstraint>,
    gamma: Option<FieldHandle>,
    sigma: Option<FieldHandle>,
    period: f64,
}

impl SemiExplicitDae {
    pub fn new(
        constraint: Arc<ImplicitConstraint>,
        gamma: Option<FieldHandle>,
        sigma: Option<FieldHandle>,
        period: f64,
    ) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidInput(format!("period must be positive, got {period}")));
        }
        for (name, f) in [("gamma", &gamma), ("sigma", &sigma)] {
            if let Some(f) = f {
                if f.input_dim() != constraint.dim() || f.output_dim() != constraint.k() {
                    return Err(Error::InvalidInput(format!(
                        "{name} must map R^{} to R^{}, got {} -> {}",
                        constraint.dim(),
                        constraint.k(),
                        f.input_dim(),
                        f.output_dim()
                    )));
                }
            }
        }
        let dae = Self {
            constraint,
            gamma,
            sigma,
            period,
        };
        dae.check_periodicity()?;
        Ok(dae)
    }

    fn check_periodicity(&self) -> Result<()> {
        let Some(sigma) = &self.sigma else {
            return Ok(());
        };
        if !sigma.is_time_dependent() {
            return Ok(());
        }
        let probes = self.constraint.domain().scaled(0.5)?.grid(3);
        for p in &probes {
            for frac in [0.0, 0.173, 0.5, 0.811] {
                let t = frac * self.period;
                let (Ok(a), Ok(b)) = (sigma.eval(t, p), sigma.eval(t + self.period, p)) else {
                    continue;
                };
                let gap = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                let scale = 1.0 + a.iter().map(|u| u.abs()).fold(0.0, f64::max);
                if gap > 1e-9 * scale {
                    return Err(Error::InvalidInput(format!(
                        "forcing is not {}-periodic at {p:?}, t = {t}: gap {gap:e}",
                        self.period
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn constraint(&self) -> &ImplicitConstraint {
        &self.constraint
    }

    pub fn constraint_arc(&self) -> &Arc<ImplicitConstraint> {
        &self.constraint
    }

    pub fn gamma(&self) -> Option<&FieldHandle> {
        self.gamma.as_ref()
    }

    pub fn sigma(&self) -> Option<&FieldHandle> {
        self.sigma.as_ref()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// The field `f + λh` that the flow integrates.
    pub fn flow_field(&self) -> TangentField {
        TangentField::new(self.constraint.clone(), self.gamma.clone(), self.sigma.clone())
            .expect("dimensions validated at construction")
    }
}

/// `f = (γ, −(∂₂g)⁻¹ ∂₁g γ)`.
pub fn build_autonomous_tangent(dae: &SemiExplicitDae) -> Result<TangentField> {
    let gamma = dae
        .gamma
        .clone()
        .ok_or_else(|| Error::InvalidInput("the DAE has no autonomous part".into()))?;
    TangentField::new(dae.constraint.clone(), Some(gamma), None)
}

/// `h(t, ·) = (σ(t, ·), −(∂₂g)⁻¹ ∂₁g σ(t, ·))`; evaluate it with
/// [`TangentField::eval`].
pub fn build_forcing_tangent(dae: &SemiExplicitDae) -> Result<TangentField> {
    let sigma = dae
        .sigma
        .clone()
        .ok_or_else(|| Error::InvalidInput("the DAE has no forcing".into()))?;
    TangentField::new(dae.constraint.clone(), None, Some(sigma))
}

/// Time average of a periodic field by the composite trapezoid rule, which
/// for periodic integrands reduces to the mean of equispaced samples.
struct PeriodAverage {
    inner: FieldHandle,
    period: f64,
    nodes: usize,
}

impl PeriodAverage {
    fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes).map(move |j| self.period * j as f64 / self.nodes as f64)
    }
}

impl VectorField for PeriodAverage {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }
    fn eval_into(&self, _t: f64, x: &[f64], out: &mut [f64]) -> std::result::Result<(), EvalError> {
        out.fill(0.0);
        let mut buf = vec![0.0; out.len()];
        for t in self.times() {
            self.inner.eval_into(t, x, &mut buf)?;
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        let n = self.nodes as f64;
        out.iter_mut().for_each(|o| *o /= n);
        Ok(())
    }
    fn jacobian(&self, _t: f64, x: &[f64]) -> std::result::Result<DMatrix<f64>, EvalError> {
        let mut acc = DMatrix::zeros(self.output_dim(), self.input_dim());
        for t in self.times() {
            acc += self.inner.jacobian(t, x)?;
        }
        Ok(acc / self.nodes as f64)
    }
}

/// `Σ` and the completed average wind `w^h`.
#[derive(Debug, Clone)]
pub struct AverageWind {
    pub sigma_mean: FieldHandle,
    pub wind: TangentField,
}

/// Average `σ` over one period, then complete. Averaging first is valid
/// because the completion is linear in the first component and its
/// coefficients do not depend on `t`.
pub fn average_wind(dae: &SemiExplicitDae, quadrature_nodes: usize) -> Result<AverageWind> {
    if quadrature_nodes < 4 {
        return Err(Error::InvalidInput(format!(
            "need at least 4 quadrature nodes, got {quadrature_nodes}"
        )));
    }
    let sigma = dae
        .sigma
        .clone()
        .ok_or_else(|| Error::InvalidInput("the DAE has no forcing".into()))?;
    let sigma_mean = if sigma.is_time_dependent() {
        FieldHandle::new(PeriodAverage {
            inner: sigma,
            period: dae.period,
            nodes: quadrature_nodes,
        })
    } else {
        sigma
    };
    let wind = TangentField::new(dae.constraint.clone(), Some(sigma_mean.clone()), None)?;
    Ok(AverageWind { sigma_mean, wind })
}

/// `𝓕 = (γ, g)`; its zeros are the trivial solution pairs at `λ = 0`.
pub fn seed_map_f(dae: &SemiExplicitDae) -> Result<FieldHandle> {
    let gamma = dae
        .gamma
        .clone()
        .ok_or_else(|| Error::InvalidInput("the DAE has no autonomous part".into()))?;
    Ok(FieldHandle::stack(vec![gamma, dae.constraint.g().clone()]))
}

/// `Φ = (Σ, g)` with `Σ` the period average of `σ`.
pub fn seed_map_phi(dae: &SemiExplicitDae, quadrature_nodes: usize) -> Result<FieldHandle> {
    let wind = average_wind(dae, quadrature_nodes)?;
    Ok(FieldHandle::stack(vec![wind.sigma_mean, dae.constraint.g().clone()]))
}

/// The seed map that governs branches of this DAE: `𝓕` when an autonomous
/// part is present, `Φ` otherwise.
pub fn seed_map(dae: &SemiExplicitDae, quadrature_nodes: usize) -> Result<FieldHandle> {
    if dae.gamma.is_some() {
        seed_map_f(dae)
    } else {
        seed_map_phi(dae, quadrature_nodes)
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use super::*;
    use crate::degree::{degree_sign_sum, DegreeParams, DomainBox};

    fn dae(
        k: usize,
        s: usize,
        g: &[&str],
        gamma: Option<&[&str]>,
        sigma: Option<&[&str]>,
        vars: &[&str],
        domain: DomainBox,
    ) -> SemiExplicitDae {
        let gf = FieldHandle::from_expressions(g, vars, None, &[]).unwrap();
        let c = Arc::new(ImplicitConstraint::new(k, s, gf, domain).unwrap());
        let mk = |src: &[&str]| FieldHandle::from_expressions(src, vars, Some("t"), &[]).unwrap();
        SemiExplicitDae::new(c, gamma.map(mk), sigma.map(mk), TAU).unwrap()
    }

    fn spring() -> SemiExplicitDae {
        dae(
            2,
            1,
            &["y^3 + y - x1^5 - x1"],
            Some(&["x2", "-0.5*x2 - y"]),
            Some(&["0", "cos(t)"]),
            &["x1", "x2", "y"],
            DomainBox::symmetric(3, 2.0).unwrap(),
        )
    }

    fn cubic() -> SemiExplicitDae {
        dae(
            1,
            1,
            &["y^3 + y - x^2"],
            None,
            Some(&["x + y + sin(t)"]),
            &["x", "y"],
            DomainBox::symmetric(2, 2.0).unwrap(),
        )
    }

    #[test]
    fn autonomous_tangent_of_spring() {
        let d = spring();
        let f = build_autonomous_tangent(&d).unwrap();
        let p = [0.3, -0.2, 0.1];
        let v = f.eval(0.0, &p).unwrap();
        assert_eq!(v[0], -0.2);
        assert!((v[1] - (-0.5 * -0.2 - 0.1)).abs() < 1e-15);
        // ẏ = (5x1⁴ + 1) ẋ1 / (3y² + 1)
        let expected = (5.0 * 0.3f64.powi(4) + 1.0) * -0.2 / (3.0 * 0.01 + 1.0);
        assert!((v[2] - expected).abs() < 1e-14);
        assert!(build_forcing_tangent(&d).is_ok());
    }

    #[test]
    fn missing_parts_are_errors() {
        assert!(build_autonomous_tangent(&cubic()).is_err());
        assert!(seed_map_f(&cubic()).is_err());
        let d = dae(
            1,
            1,
            &["y - x"],
            Some(&["1"]),
            None,
            &["x", "y"],
            DomainBox::symmetric(2, 1.0).unwrap(),
        );
        assert!(build_forcing_tangent(&d).is_err());
        assert!(average_wind(&d, 16).is_err());
        assert_eq!(
            build_autonomous_tangent(&d).unwrap().eval(0.0, &[0.1, 0.1]).unwrap(),
            vec![1.0, 1.0]
        );
    }

    #[test]
    fn non_periodic_forcing_is_rejected() {
        let gf = FieldHandle::from_expressions(&["y - x"], &["x", "y"], None, &[]).unwrap();
        let c = Arc::new(ImplicitConstraint::new(1, 1, gf, DomainBox::symmetric(2, 1.0).unwrap()).unwrap());
        let sigma = FieldHandle::from_expressions(&["sin(t/2)"], &["x", "y"], Some("t"), &[]).unwrap();
        assert!(SemiExplicitDae::new(c, None, Some(sigma), TAU).is_err());
    }

    #[test]
    fn forcing_tangent_matches_closed_form() {
        let h = build_forcing_tangent(&cubic()).unwrap();
        let (t, x, y) = (1.1f64, 0.6f64, -0.4f64);
        let v = h.eval(t, &[x, y]).unwrap();
        let s = x + y + t.sin();
        assert!((v[0] - s).abs() < 1e-15);
        assert!((v[1] - 2.0 * x * s / (3.0 * y * y + 1.0)).abs() < 1e-14);
        let later = h.eval(t + TAU, &[x, y]).unwrap();
        assert!(v.iter().zip(&later).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn average_of_cubic_forcing() {
        let w = average_wind(&cubic(), 64).unwrap();
        for &(x, y) in &[(0.3, -1.2), (1.7, 0.4)] {
            let v = w.sigma_mean.eval(0.0, &[x, y]).unwrap();
            assert!((v[0] - (x + y)).abs() < 1e-12);
        }
    }

    #[test]
    fn average_of_polar_forcing() {
        let d = dae(
            2,
            2,
            &["x1 - y1*cos(y2)", "x2 - y1*sin(y2)"],
            None,
            Some(&["y2 + cos(t)", "y1 - 2*cos(t)^2"]),
            &["x1", "x2", "y1", "y2"],
            DomainBox::from_bounds(&[(-3.0, 3.0), (-3.0, 3.0), (0.2, 3.0), (-2.0, 2.0)]).unwrap(),
        );
        let w = average_wind(&d, 64).unwrap();
        let v = w.sigma_mean.eval(0.0, &[0.0, 0.0, 1.3, -0.4]).unwrap();
        assert!((v[0] + 0.4).abs() < 1e-12);
        assert!((v[1] - 0.3).abs() < 1e-12);
        let phi = seed_map_phi(&d, 64).unwrap();
        let r = degree_sign_sum(&phi, d.constraint().domain(), &DegreeParams::default()).unwrap();
        assert_eq!(r.degree, -1);
    }

    #[test]
    fn time_independent_forcing_is_its_own_average() {
        let d = dae(
            1,
            1,
            &["y - x"],
            None,
            Some(&["x^2 - y"]),
            &["x", "y"],
            DomainBox::symmetric(2, 1.0).unwrap(),
        );
        let w = average_wind(&d, 8).unwrap();
        let p = [0.3, 0.7];
        assert_eq!(
            w.sigma_mean.eval(0.0, &p).unwrap(),
            d.sigma().unwrap().eval(0.0, &p).unwrap()
        );
        let h = build_forcing_tangent(&d).unwrap();
        assert!(!h.is_time_dependent());
        assert!(average_wind(&d, 3).is_err());
    }

    #[test]
    fn seed_maps() {
        let f = seed_map_f(&spring()).unwrap();
        let (x1, x2, y) = (0.2f64, -0.3f64, 0.5f64);
        let v = f.eval(0.0, &[x1, x2, y]).unwrap();
        assert_eq!(v[0], x2);
        assert!((v[1] - (-0.5 * x2 - y)).abs() < 1e-15);
        assert!((v[2] - (y.powi(3) + y - x1.powi(5) - x1)).abs() < 1e-15);
        let r = degree_sign_sum(&f, &DomainBox::symmetric(3, 2.0).unwrap(), &DegreeParams::default()).unwrap();
        assert_eq!(r.degree, 1);
        assert_eq!(r.zeros.len(), 1);

        let phi = seed_map_phi(&cubic(), 64).unwrap();
        let r = degree_sign_sum(&phi, &DomainBox::symmetric(2, 2.0).unwrap(), &DegreeParams::default()).unwrap();
        assert_eq!(r.degree, 1);
    }

    #[test]
    fn zero_forcing_gives_degenerate_seed() {
        let d = dae(
            1,
            1,
            &["y^3 + y - x^2"],
            None,
            Some(&["0"]),
            &["x", "y"],
            DomainBox::symmetric(2, 2.0).unwrap(),
        );
        let phi = seed_map_phi(&d, 16).unwrap();
        assert!(degree_sign_sum(&phi, d.constraint().domain(), &DegreeParams::default()).is_err());
    }

    #[test]
    fn seed_map_without_zeros_on_manifold() {
        let d = dae(
            1,
            1,
            &["y - x"],
            Some(&["1 + x^2"]),
            None,
            &["x", "y"],
            DomainBox::symmetric(2, 1.0).unwrap(),
        );
        let f = seed_map(&d, 16).unwrap();
        let r = degree_sign_sum(&f, d.constraint().domain(), &DegreeParams::default()).unwrap();
        assert_eq!(r.degree, 0);
        assert!(r.zeros.is_empty());
    }
}
