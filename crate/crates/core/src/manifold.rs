//! Manifolds `M = g⁻¹(0) ⊂ ℝᵏ × ℝˢ` with `∂₂g` invertible, tangent fields
//! on them, and the reduction of their degree to a Brouwer degree in the
//! ambient space:
//!
//! ```text
//! deg(φ, M) = 𝔰 · deg(𝓕, U),   𝓕(x, y) = (φ̃₁(x, y), g(x, y)),
//! ```
//!
//! where `𝔰` is the constant sign of `det ∂₂g`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::degree::{self, DegreeParams, DegreeResult, DomainBox};
use crate::error::{Error, Result};
use crate::expr::EvalError;
use crate::field::{norm, FieldHandle, VectorField};

/// Below this `|det ∂₂g|` the constraint is treated as singular.
pub const SINGULAR_DET: f64 = 1e-10;
/// Below this `|det ∂₂g|` a warning is recorded.
pub const WARN_DET: f64 = 1e-6;

/// The constraint map `g : ℝᵏ × ℝˢ → ℝˢ` and its domain box.
#[derive(Debug, Clone)]
pub struct ImplicitConstraint {
    k: usize,
    s: usize,
    g: FieldHandle,
    domain: DomainBox,
}

impl ImplicitConstraint {
    pub fn new(k: usize, s: usize, g: FieldHandle, domain: DomainBox) -> Result<Self> {
        if s == 0 || k == 0 {
            return Err(Error::InvalidInput(
                "both the dynamic and algebraic blocks need at least one variable".into(),
            ));
        }
        if g.input_dim() != k + s || g.output_dim() != s || domain.dim() != k + s {
            return Err(Error::InvalidInput(format!(
                "constraint {} -> {} on a {}-dimensional box does not match k = {k}, s = {s}",
                g.input_dim(),
                g.output_dim(),
                domain.dim()
            )));
        }
        Ok(Self { k, s, g, domain })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn dim(&self) -> usize {
        self.k + self.s
    }

    pub fn g(&self) -> &FieldHandle {
        &self.g
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    /// Same constraint restricted to another box.
    pub fn with_domain(&self, domain: DomainBox) -> Result<Self> {
        Self::new(self.k, self.s, self.g.clone(), domain)
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>> {
        Ok(self.g.eval(0.0, point)?)
    }

    pub fn residual(&self, point: &[f64]) -> Result<f64> {
        Ok(norm(&self.eval(point)?))
    }

    /// `(∂₁g, ∂₂g)` at `point`: `s×k` and `s×s` blocks of `g′`.
    pub fn partials(&self, point: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let jac = self.g.jacobian(0.0, point)?;
        Ok((
            jac.columns(0, self.k).into_owned(),
            jac.columns(self.k, self.s).into_owned(),
        ))
    }

    pub fn partial2_det(&self, point: &[f64]) -> Result<f64> {
        let (_, d2) = self.partials(point)?;
        Ok(d2.lu().determinant())
    }

    /// `|g′(point) · v|`, zero exactly when `v` is tangent to the level set.
    pub fn tangency_residual(&self, point: &[f64], v: &[f64]) -> Result<f64> {
        let jac = self.g.jacobian(0.0, point)?;
        Ok((jac * DVector::from_column_slice(v)).norm())
    }

    /// Second component `-(∂₂g)⁻¹ ∂₁g ψ₁` of the tangent vector whose first
    /// component is `psi1`, by an LU solve.
    pub fn complete(&self, point: &[f64], psi1: &[f64]) -> Result<Vec<f64>> {
        let (d1, d2) = self.partials(point)?;
        let rhs = -(d1 * DVector::from_column_slice(psi1));
        let lu = d2.lu();
        let det = lu.determinant();
        if det.abs() < SINGULAR_DET {
            return Err(Error::SingularPartial {
                location: point.to_vec(),
                determinant: det,
            });
        }
        let psi2 = lu.solve(&rhs).ok_or_else(|| Error::SingularPartial {
            location: point.to_vec(),
            determinant: det,
        })?;
        Ok(psi2.iter().copied().collect())
    }
}

/// Options for [`implicit_solve_y`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitSolve {
    pub tol: f64,
    pub max_iter: usize,
    /// Fail when the solution leaves the algebraic part of the domain box.
    pub enforce_domain: bool,
}

impl Default for ImplicitSolve {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            enforce_domain: true,
        }
    }
}

/// Newton on `y ↦ g(x, y)` from `y_guess`, with step halving on residual
/// increase.
pub fn implicit_solve_y(
    constraint: &ImplicitConstraint,
    x: &[f64],
    y_guess: &[f64],
    opts: ImplicitSolve,
) -> Result<Vec<f64>> {
    let (k, s) = (constraint.k, constraint.s);
    if x.len() != k || y_guess.len() != s {
        return Err(Error::InvalidInput(format!(
            "expected {k} dynamic and {s} algebraic values"
        )));
    }
    let mut point: Vec<f64> = x.iter().chain(y_guess).copied().collect();
    let mut gv = constraint.eval(&point)?;
    let mut r = norm(&gv);
    let mut iter = 0;
    while r > opts.tol {
        if iter == opts.max_iter {
            return Err(Error::NonConvergence(format!(
                "implicit solve stalled at |g| = {r:e} after {iter} iterations"
            )));
        }
        iter += 1;
        let (_, d2) = constraint.partials(&point)?;
        let dy = d2
            .lu()
            .solve(&-DVector::from_column_slice(&gv))
            .filter(|d| d.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::SingularPartial {
                location: point.clone(),
                determinant: 0.0,
            })?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=20 {
            let mut trial = point.clone();
            for (t, d) in trial[k..].iter_mut().zip(dy.iter()) {
                *t += step * d;
            }
            if let Ok(gt) = constraint.eval(&trial) {
                let rt = norm(&gt);
                if rt < r {
                    point = trial;
                    gv = gt;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence(format!(
                "implicit solve cannot reduce |g| = {r:e}"
            )));
        }
    }
    let y = point[k..].to_vec();
    if opts.enforce_domain {
        let lo = &constraint.domain.lower()[k..];
        let hi = &constraint.domain.upper()[k..];
        if y.iter().zip(lo.iter().zip(hi)).any(|(v, (l, h))| v < l || v > h) {
            return Err(Error::LeftDomain { location: point });
        }
    }
    Ok(y)
}

/// Outcome of sampling `det ∂₂g` near the manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct SignReport {
    pub sign: i32,
    pub samples: usize,
    pub min_abs_det: f64,
    pub warnings: Vec<String>,
}

/// Constant sign `𝔰` of `det ∂₂g`, sampled at grid nodes of the constraint's
/// domain projected onto `M` along `y`.
pub fn partial2_sign(constraint: &ImplicitConstraint, sample_density: usize) -> Result<i32> {
    Ok(partial2_sign_report(constraint, constraint.domain(), sample_density)?.sign)
}

pub fn partial2_sign_report(
    constraint: &ImplicitConstraint,
    region: &DomainBox,
    sample_density: usize,
) -> Result<SignReport> {
    let k = constraint.k;
    let local = constraint.with_domain(region.clone())?;
    let opts = ImplicitSolve {
        tol: 1e-10,
        max_iter: 30,
        enforce_domain: true,
    };
    let mut positive = 0;
    let mut negative = 0;
    let mut min_abs = f64::INFINITY;
    for node in region.grid(sample_density.max(2)) {
        let Ok(y) = implicit_solve_y(&local, &node[..k], &node[k..], opts) else {
            continue;
        };
        let point: Vec<f64> = node[..k].iter().chain(&y).copied().collect();
        let det = constraint.partial2_det(&point)?;
        if !(det.abs() >= SINGULAR_DET) {
            return Err(Error::SingularPartial {
                location: point,
                determinant: det,
            });
        }
        min_abs = min_abs.min(det.abs());
        if det > 0.0 {
            positive += 1;
        } else {
            negative += 1;
        }
    }
    if positive > 0 && negative > 0 {
        return Err(Error::NonConstantSign { positive, negative });
    }
    if positive + negative == 0 {
        return Err(Error::EmptySample);
    }
    let mut warnings = Vec::new();
    if min_abs < WARN_DET {
        warnings.push(format!("det of the algebraic jacobian gets as small as {min_abs:e}"));
    }
    Ok(SignReport {
        sign: if positive > 0 { 1 } else { -1 },
        samples: positive + negative,
        min_abs_det: min_abs,
        warnings,
    })
}

/// Tangent field on `M` determined by its first component
/// `ψ₁ = drift + λ·forcing`; the second component is always derived.
#[derive(Debug, Clone)]
pub struct TangentField {
    constraint: Arc<ImplicitConstraint>,
    drift: Option<FieldHandle>,
    forcing: Option<FieldHandle>,
}

impl TangentField {
    pub fn new(
        constraint: Arc<ImplicitConstraint>,
        drift: Option<FieldHandle>,
        forcing: Option<FieldHandle>,
    ) -> Result<Self> {
        for f in drift.iter().chain(&forcing) {
            if f.input_dim() != constraint.dim() || f.output_dim() != constraint.k() {
                return Err(Error::InvalidInput(format!(
                    "first component must map R^{} to R^{}, got {} -> {}",
                    constraint.dim(),
                    constraint.k(),
                    f.input_dim(),
                    f.output_dim()
                )));
            }
        }
        Ok(Self {
            constraint,
            drift,
            forcing,
        })
    }

    pub fn constraint(&self) -> &ImplicitConstraint {
        &self.constraint
    }

    pub fn constraint_arc(&self) -> &Arc<ImplicitConstraint> {
        &self.constraint
    }

    pub fn drift(&self) -> Option<&FieldHandle> {
        self.drift.as_ref()
    }

    pub fn forcing(&self) -> Option<&FieldHandle> {
        self.forcing.as_ref()
    }

    pub fn is_time_dependent(&self) -> bool {
        self.drift
            .iter()
            .chain(&self.forcing)
            .any(FieldHandle::is_time_dependent)
    }

    /// `ψ₁(t, ξ) = drift(t, ξ) + λ·forcing(t, ξ)`.
    pub fn first_component(&self, t: f64, point: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.constraint.k()];
        if let Some(d) = &self.drift {
            d.eval_into(t, point, &mut out)?;
        }
        if let Some(f) = &self.forcing {
            if lambda != 0.0 {
                let v = f.eval(t, point)?;
                for (o, v) in out.iter_mut().zip(v) {
                    *o += lambda * v;
                }
            }
        }
        Ok(out)
    }

    /// Full ambient vector `(ψ₁, ψ₂)` at parameter `λ`.
    pub fn eval_at(&self, t: f64, point: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let mut psi = self.first_component(t, point, lambda)?;
        let psi2 = self.constraint.complete(point, &psi)?;
        psi.extend(psi2);
        Ok(psi)
    }

    /// Field value with unit forcing weight.
    pub fn eval(&self, t: f64, point: &[f64]) -> Result<Vec<f64>> {
        self.eval_at(t, point, 1.0)
    }

    pub fn tangency_residual(&self, t: f64, point: &[f64]) -> Result<f64> {
        self.tangency_residual_at(t, point, 1.0)
    }

    pub fn tangency_residual_at(&self, t: f64, point: &[f64], lambda: f64) -> Result<f64> {
        let v = self.eval_at(t, point, lambda)?;
        self.constraint.tangency_residual(point, &v)
    }

    /// Ambient `ℝᵏ⁺ˢ → ℝᵏ⁺ˢ` view at a fixed `λ`.
    pub fn as_field(&self, lambda: f64) -> FieldHandle {
        FieldHandle::new(AmbientView {
            field: self.clone(),
            lambda,
        })
    }
}

struct AmbientView {
    field: TangentField,
    lambda: f64,
}

impl VectorField for AmbientView {
    fn input_dim(&self) -> usize {
        self.field.constraint.dim()
    }
    fn output_dim(&self) -> usize {
        self.field.constraint.dim()
    }
    fn is_time_dependent(&self) -> bool {
        self.field.is_time_dependent()
    }
    fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> std::result::Result<(), EvalError> {
        let v = self
            .field
            .eval_at(t, x, self.lambda)
            .map_err(|e| EvalError::Domain(e.to_string()))?;
        out.copy_from_slice(&v);
        Ok(())
    }
}

/// Complete a first component `ψ₁` to a tangent field on `M`.
pub fn tangent_completion(psi1: FieldHandle, constraint: Arc<ImplicitConstraint>) -> Result<TangentField> {
    TangentField::new(constraint, Some(psi1), None)
}

/// `tangency_residual` of a completed field; see [`TangentField::tangency_residual`].
pub fn tangency_residual(field: &TangentField, t: f64, point: &[f64]) -> Result<f64> {
    field.tangency_residual(t, point)
}

/// `𝓕(x, y) = (φ̃₁(x, y), g(x, y))`, evaluated at `t = 0`.
pub fn reduced_map(phi1: &FieldHandle, constraint: &ImplicitConstraint) -> Result<FieldHandle> {
    if phi1.input_dim() != constraint.dim() || phi1.output_dim() != constraint.k() {
        return Err(Error::InvalidInput(format!(
            "first component must map R^{} to R^{}",
            constraint.dim(),
            constraint.k()
        )));
    }
    Ok(FieldHandle::stack(vec![phi1.clone(), constraint.g().clone()]))
}

/// Degree of a tangent field on `M` through the reduction formula.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldDegree {
    /// `𝔰 · deg(𝓕)`.
    pub degree: i64,
    pub partial2_sign: i32,
    /// Brouwer degree of the reduced map on the box.
    pub reduced: DegreeResult,
}

/// Grid density used when sampling `det ∂₂g` inside a degree computation.
fn sign_density(dim: usize) -> usize {
    match dim {
        0..=2 => 16,
        3 => 8,
        _ => 6,
    }
}

pub fn manifold_degree(
    phi1: &FieldHandle,
    constraint: &ImplicitConstraint,
    region: &DomainBox,
    params: &DegreeParams,
) -> Result<ManifoldDegree> {
    let sign = partial2_sign_report(constraint, region, sign_density(region.dim()))?;
    let f = reduced_map(phi1, constraint)?;
    let mut reduced = degree::degree_sign_sum(&f, region, params)?;
    reduced.warnings.extend(sign.warnings);
    Ok(ManifoldDegree {
        degree: i64::from(sign.sign) * reduced.degree,
        partial2_sign: sign.sign,
        reduced,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionContribution {
    pub region: DomainBox,
    /// `None` when the region meets no sampled point of `M`; its reduced
    /// degree is then necessarily 0.
    pub partial2_sign: Option<i32>,
    pub reduced_degree: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRegionDegree {
    pub degree: i64,
    pub contributions: Vec<RegionContribution>,
}

/// `Σᵢ 𝔰ᵢ · deg(𝓕, Uᵢ)` over pairwise disjoint boxes, each with its own
/// constant sign of `det ∂₂g`. Every zero of `𝓕` in the constraint's
/// domain must lie in one of the boxes.
pub fn multi_region_degree(
    phi1: &FieldHandle,
    constraint: &ImplicitConstraint,
    regions: &[DomainBox],
    params: &DegreeParams,
) -> Result<MultiRegionDegree> {
    for (i, a) in regions.iter().enumerate() {
        for b in &regions[i + 1..] {
            if !a.is_disjoint(b) {
                return Err(Error::InvalidInput(format!("regions overlap: {a:?} and {b:?}")));
            }
        }
    }
    let f = reduced_map(phi1, constraint)?;
    for z in degree::find_zeros_with(&f, constraint.domain(), params)? {
        if !regions.iter().any(|r| r.contains_strictly(&z.location)) {
            return Err(Error::ZeroOutsideRegions { location: z.location });
        }
    }
    let mut total = 0;
    let mut contributions = Vec::with_capacity(regions.len());
    for region in regions {
        let reduced = degree::degree_sign_sum(&f, region, params)?;
        let sign = match partial2_sign_report(constraint, region, sign_density(region.dim())) {
            Ok(r) => Some(r.sign),
            Err(Error::EmptySample) if reduced.zeros.is_empty() => None,
            Err(e) => return Err(e),
        };
        total += i64::from(sign.unwrap_or(0)) * reduced.degree;
        contributions.push(RegionContribution {
            region: region.clone(),
            partial2_sign: sign,
            reduced_degree: reduced.degree,
        });
    }
    Ok(MultiRegionDegree {
        degree: total,
        contributions,
    })
}

/// Determinants in the block factorization
/// `det 𝓕′ = det ∂₂g · det(∂₁φ̃₁ − ∂₂φ̃₁ (∂₂g)⁻¹ ∂₁g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurSplit {
    pub det_full: f64,
    pub det_partial2: f64,
    pub det_schur: f64,
}

pub fn schur_determinant_split(
    phi1: &FieldHandle,
    constraint: &ImplicitConstraint,
    point: &[f64],
) -> Result<SchurSplit> {
    let (k, s) = (constraint.k(), constraint.s());
    let dphi = phi1.jacobian(0.0, point)?;
    let (d1g, d2g) = constraint.partials(point)?;

    let mut full = DMatrix::zeros(k + s, k + s);
    full.view_mut((0, 0), (k, k + s)).copy_from(&dphi);
    full.view_mut((k, 0), (s, k)).copy_from(&d1g);
    full.view_mut((k, k), (s, s)).copy_from(&d2g);
    let det_full = full.determinant();

    let lu = d2g.lu();
    let det_partial2 = lu.determinant();
    if det_partial2.abs() < SINGULAR_DET {
        return Err(Error::SingularPartial {
            location: point.to_vec(),
            determinant: det_partial2,
        });
    }
    let solved = lu.solve(&d1g).ok_or_else(|| Error::SingularPartial {
        location: point.to_vec(),
        determinant: det_partial2,
    })?;
    let a = dphi.columns(0, k).into_owned();
    let b = dphi.columns(k, s).into_owned();
    let schur = a - b * solved;
    Ok(SchurSplit {
        det_full,
        det_partial2,
        det_schur: schur.determinant(),
    })
}
