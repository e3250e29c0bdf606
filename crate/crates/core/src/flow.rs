//! Fixed-step integration of tangent fields on `M` with re-projection of the
//! algebraic variables after every step.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::manifold::{implicit_solve_y, ImplicitSolve, TangentField};

/// Steps per period used unless a caller overrides it.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 4096;
/// Largest `|g|` accepted for an initial point.
pub const ON_MANIFOLD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt_max: f64,
    /// Record a dense-output sample every `sample_stride` steps; 0 keeps
    /// only the end points.
    pub sample_stride: usize,
    pub projection: ImplicitSolve,
    /// Times a failed step may be split in half before giving up.
    pub max_halvings: usize,
}

impl StepControl {
    pub fn per_period(period: f64, steps: usize) -> Self {
        Self {
            dt_max: period / steps.max(1) as f64,
            sample_stride: 0,
            projection: ImplicitSolve {
                tol: 1e-12,
                max_iter: 20,
                enforce_domain: false,
            },
            max_halvings: 12,
        }
    }

    pub fn with_samples(mut self, stride: usize) -> Self {
        self.sample_stride = stride;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub t: f64,
    pub state: Vec<f64>,
    /// `|g(state)|`.
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub final_state: Vec<f64>,
    pub max_drift: f64,
    pub steps: usize,
    pub samples: Vec<FlowSample>,
}

impl FlowResult {
    /// CSV with header `t,x1..xk,y1..ys,abs_g`.
    pub fn write_csv<W: Write>(&self, k: usize, mut out: W) -> io::Result<()> {
        let n = self.final_state.len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=k).map(|i| format!("x{i}")));
        header.extend((1..=n - k).map(|i| format!("y{i}")));
        header.push("abs_g".into());
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![fmt_num(s.t)];
            row.extend(s.state.iter().map(|v| fmt_num(*v)));
            row.push(fmt_num(s.drift));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn rk4(field: &TangentField, state: &[f64], t: f64, dt: f64, lambda: f64) -> Result<Vec<f64>> {
    let shift = |base: &[f64], k: &[f64], h: f64| -> Vec<f64> { base.iter().zip(k).map(|(b, k)| b + h * k).collect() };
    let k1 = field.eval_at(t, state, lambda)?;
    let k2 = field.eval_at(t + 0.5 * dt, &shift(state, &k1, 0.5 * dt), lambda)?;
    let k3 = field.eval_at(t + 0.5 * dt, &shift(state, &k2, 0.5 * dt), lambda)?;
    let k4 = field.eval_at(t + dt, &shift(state, &k3, dt), lambda)?;
    Ok(state
        .iter()
        .enumerate()
        .map(|(i, s)| s + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// One RK4 step on the ambient field followed by Newton re-projection of
/// `y` (the dynamic part `x` is kept). A failed projection splits the step.
pub fn projected_step(
    field: &TangentField,
    state: &[f64],
    t: f64,
    dt: f64,
    lambda: f64,
    control: &StepControl,
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {dt}")));
    }
    step_with_halving(field, state, t, dt, lambda, control, 0)
}

fn step_with_halving(
    field: &TangentField,
    state: &[f64],
    t: f64,
    dt: f64,
    lambda: f64,
    control: &StepControl,
    depth: usize,
) -> Result<Vec<f64>> {
    match try_step(field, state, t, dt, lambda, control) {
        Ok(next) => Ok(next),
        Err(Error::LeftDomain { location }) => Err(Error::LeftDomain { location }),
        Err(_) if depth < control.max_halvings => {
            let half = 0.5 * dt;
            let mid = step_with_halving(field, state, t, half, lambda, control, depth + 1)?;
            step_with_halving(field, &mid, t + half, half, lambda, control, depth + 1)
        }
        Err(_) => Err(Error::StepUnderflow { t }),
    }
}

fn try_step(
    field: &TangentField,
    state: &[f64],
    t: f64,
    dt: f64,
    lambda: f64,
    control: &StepControl,
) -> Result<Vec<f64>> {
    let k = field.constraint().k();
    let mut next = rk4(field, state, t, dt, lambda)?;
    let y = implicit_solve_y(field.constraint(), &next[..k], &next[k..], control.projection)?;
    next[k..].copy_from_slice(&y);
    if !field.constraint().domain().contains(&next) {
        if let Some(limit) = escape_limit(field, &next) {
            return Err(Error::LeftDomain { location: limit });
        }
    }
    Ok(next)
}

/// States far outside the domain box (beyond twice its size) abort the
/// integration; mild excursions are tolerated.
fn escape_limit(field: &TangentField, state: &[f64]) -> Option<Vec<f64>> {
    let b = field.constraint().domain();
    let far = state.iter().zip(b.lower().iter().zip(b.upper())).any(|(v, (l, u))| {
        let w = u - l;
        *v < l - w || *v > u + w || !v.is_finite()
    });
    far.then(|| state.to_vec())
}

/// Integrate from `t0` to `t1` in `ceil((t1 − t0)/dt_max)` equal steps.
pub fn flow_map(
    field: &TangentField,
    xi0: &[f64],
    t0: f64,
    t1: f64,
    lambda: f64,
    control: &StepControl,
) -> Result<FlowResult> {
    let c = field.constraint();
    if xi0.len() != c.dim() {
        return Err(Error::InvalidInput(format!(
            "initial state has {} components, expected {}",
            xi0.len(),
            c.dim()
        )));
    }
    if !(t1 >= t0) || !(control.dt_max > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need t1 >= t0 and a positive step, got [{t0}, {t1}], dt_max {}",
            control.dt_max
        )));
    }
    let drift0 = c.residual(xi0)?;
    if drift0 > ON_MANIFOLD_TOL {
        return Err(Error::InvalidInput(format!(
            "initial state is off the manifold: |g| = {drift0:e}"
        )));
    }
    let steps = ((t1 - t0) / control.dt_max).ceil() as usize;
    let dt = if steps > 0 { (t1 - t0) / steps as f64 } else { 0.0 };
    let mut state = xi0.to_vec();
    let mut max_drift = drift0;
    let mut samples = vec![FlowSample {
        t: t0,
        state: state.clone(),
        drift: drift0,
    }];
    for i in 0..steps {
        let t = t0 + i as f64 * dt;
        state = projected_step(field, &state, t, dt, lambda, control)?;
        let drift = c.residual(&state)?;
        max_drift = max_drift.max(drift);
        let last = i + 1 == steps;
        if last || (control.sample_stride > 0 && (i + 1) % control.sample_stride == 0) {
            samples.push(FlowSample {
                t: if last { t1 } else { t + dt },
                state: state.clone(),
                drift,
            });
        }
    }
    Ok(FlowResult {
        final_state: state,
        max_drift,
        steps,
        samples,
    })
}

/// State after one period `T` starting from `xi0` at `t = 0`.
pub fn period_map(
    field: &TangentField,
    xi0: &[f64],
    lambda: f64,
    period: f64,
    control: &StepControl,
) -> Result<Vec<f64>> {
    Ok(flow_map(field, xi0, 0.0, period, lambda, control)?.final_state)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;
    use std::sync::Arc;

    use super::*;
    use crate::degree::DomainBox;
    use crate::field::FieldHandle;
    use crate::manifold::{tangent_completion, ImplicitConstraint};

    fn line_field(rate: &str) -> TangentField {
        let g = FieldHandle::from_expressions(&["y - x"], &["x", "y"], None, &[]).unwrap();
        let c = Arc::new(ImplicitConstraint::new(1, 1, g, DomainBox::symmetric(2, 10.0).unwrap()).unwrap());
        tangent_completion(
            FieldHandle::from_expressions(&[rate], &["x", "y"], Some("t"), &[]).unwrap(),
            c,
        )
        .unwrap()
    }

    #[test]
    fn zero_field_is_stationary() {
        let f = line_field("0");
        let c = StepControl::per_period(1.0, 8);
        let next = projected_step(&f, &[0.3, 0.3], 0.0, 0.5, 1.0, &c).unwrap();
        assert_eq!(next, vec![0.3, 0.3]);
        assert_eq!(period_map(&f, &[0.3, 0.3], 0.0, TAU, &c).unwrap(), vec![0.3, 0.3]);
    }

    #[test]
    fn unit_speed_on_diagonal() {
        let f = line_field("1");
        let c = StepControl::per_period(1.0, 16);
        let r = flow_map(&f, &[0.0, 0.0], 0.0, 1.0, 0.0, &c).unwrap();
        assert_eq!(r.steps, 16);
        assert!((r.final_state[0] - 1.0).abs() < 1e-8);
        assert!((r.final_state[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn empty_interval_is_identity() {
        let f = line_field("x");
        let c = StepControl::per_period(1.0, 16);
        let r = flow_map(&f, &[0.4, 0.4], 2.0, 2.0, 0.0, &c).unwrap();
        assert_eq!(r.steps, 0);
        assert_eq!(r.final_state, vec![0.4, 0.4]);
    }

    #[test]
    fn rejects_off_manifold_start() {
        let f = line_field("1");
        let c = StepControl::per_period(1.0, 16);
        assert!(flow_map(&f, &[0.0, 0.1], 0.0, 1.0, 0.0, &c).is_err());
        assert!(flow_map(&f, &[0.0, 0.0], 1.0, 0.0, 0.0, &c).is_err());
    }

    #[test]
    fn semigroup_property() {
        let f = line_field("-x + x^3/10");
        let c = StepControl::per_period(1.0, 256);
        let whole = flow_map(&f, &[0.8, 0.8], 0.0, 2.0, 0.0, &c).unwrap().final_state;
        let half = flow_map(&f, &[0.8, 0.8], 0.0, 1.0, 0.0, &c).unwrap().final_state;
        let split = flow_map(&f, &half, 1.0, 2.0, 0.0, &c).unwrap().final_state;
        assert!((whole[0] - split[0]).abs() < 1e-12);
    }

    #[test]
    fn fourth_order_convergence() {
        // ẋ = -x on the diagonal: x(1) = x0·e⁻¹
        let f = line_field("-x");
        let exact = (-1.0f64).exp();
        let err = |n: usize| {
            let c = StepControl::per_period(1.0, n);
            let r = flow_map(&f, &[1.0, 1.0], 0.0, 1.0, 0.0, &c).unwrap();
            (r.final_state[0] - exact).abs()
        };
        let ratio = err(8) / err(16);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn spring_contracts_like_its_linearization() {
        // near the origin y ≈ x1, so (x1, x2)' ≈ A (x1, x2) with
        // A = [[0, 1], [-1, -α]]; one period maps x0 to exp(2πA) x0
        let dae = crate::registry::find("example-5-5")
            .unwrap()
            .problem()
            .to_dae()
            .unwrap();
        let c = StepControl::per_period(TAU, DEFAULT_STEPS_PER_PERIOD);
        let x0 = [1e-4, 0.0];
        let y = implicit_solve_y(dae.constraint(), &x0, &[x0[0]], c.projection).unwrap();
        let start = [x0[0], x0[1], y[0]];
        let end = period_map(&dae.flow_field(), &start, 0.0, TAU, &c).unwrap();
        let a = nalgebra::Matrix2::new(0.0, 1.0, -1.0, -0.5);
        let want = (a * TAU).exp() * nalgebra::Vector2::new(x0[0], x0[1]);
        for i in 0..2 {
            assert!((end[i] - want[i]).abs() <= 1e-6 * x0[0], "{end:?} vs {want:?}");
        }
        assert!(end[0].hypot(end[1]) < 0.25 * x0[0]);
    }

    #[test]
    fn spring_stays_on_manifold() {
        let dae = crate::registry::find("example-5-5")
            .unwrap()
            .problem()
            .to_dae()
            .unwrap();
        let c = StepControl::per_period(TAU, DEFAULT_STEPS_PER_PERIOD);
        let y = implicit_solve_y(dae.constraint(), &[0.1, 0.0], &[0.0], c.projection).unwrap();
        let r = flow_map(&dae.flow_field(), &[0.1, 0.0, y[0]], 0.0, TAU, 0.0, &c).unwrap();
        assert!(r.max_drift <= 1e-8);
        assert_eq!(r.steps, 4096);
    }

    #[test]
    fn csv_export() {
        let f = line_field("1");
        let c = StepControl::per_period(1.0, 4).with_samples(1);
        let r = flow_map(&f, &[0.0, 0.0], 0.0, 1.0, 0.0, &c).unwrap();
        let mut buf = Vec::new();
        r.write_csv(1, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,y1,abs_g");
        assert_eq!(lines.len(), 6);
        assert!(r.samples.windows(2).all(|w| w[0].t < w[1].t));
    }
}
