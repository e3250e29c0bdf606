//! Branches of T-periodic solution pairs by shooting on the initial value
//! `x₀` and pseudo-arclength continuation in `(x₀, λ)`.
//!
//! Unknowns are packed as `u = (x₀, λ)`. When the DAE has no drift `γ` the
//! period-map residual vanishes identically at `λ = 0`, so the corrector
//! works with `R/λ`, whose limit at `λ = 0` is `T·Σ(x₀)`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dae::{average_wind, SemiExplicitDae, DEFAULT_QUADRATURE_NODES};
use crate::degree::{find_zeros_with, DegreeParams, DomainBox, ZeroRecord};
use crate::error::{Error, Result};
use crate::field::{norm, FieldHandle};
use crate::flow::{flow_map, fmt_num, FlowSample, StepControl, DEFAULT_STEPS_PER_PERIOD};
use crate::manifold::{implicit_solve_y, ImplicitSolve, TangentField};

/// Dense samples kept per pair: every `SAMPLE_STRIDE`-th integration step.
const SAMPLE_STRIDE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPair {
    pub lambda: f64,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub period: f64,
    /// `|x(T) − x₀|`, never scaled.
    pub residual: f64,
    /// Largest distance of the trajectory from its time mean.
    pub amplitude: f64,
    /// Largest `|g|` along the trajectory.
    pub drift: f64,
    pub iterations: usize,
    pub samples: Vec<FlowSample>,
}

impl SolutionPair {
    pub fn state0(&self) -> Vec<f64> {
        self.x0.iter().chain(&self.y0).copied().collect()
    }

    fn unknowns(&self) -> Vec<f64> {
        let mut u = self.x0.clone();
        u.push(self.lambda);
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    LambdaMax,
    MaxSteps,
    CorrectorFailure,
    LeftDomain,
    /// The path came back to `λ = 0`.
    ReturnedToZero,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::LambdaMax => "lambda-max",
            Termination::MaxSteps => "max-steps",
            Termination::CorrectorFailure => "corrector-failure",
            Termination::LeftDomain => "left-domain",
            Termination::ReturnedToZero => "returned-to-zero",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub pairs: Vec<SolutionPair>,
    pub seed: ZeroRecord,
    pub termination: Termination,
    /// Why the tracer stopped, when it was not simply reaching a limit.
    pub detail: Option<String>,
}

impl Branch {
    /// CSV: `index,lambda,x0_1..,y0_1..,amplitude,residual,drift`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let (k, s) = self.pairs.first().map(|p| (p.x0.len(), p.y0.len())).unwrap_or((0, 0));
        let mut header = vec!["index".to_string(), "lambda".to_string()];
        header.extend((1..=k).map(|i| format!("x0_{i}")));
        header.extend((1..=s).map(|i| format!("y0_{i}")));
        header.extend(["amplitude", "residual", "drift"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for (i, p) in self.pairs.iter().enumerate() {
            let mut row = vec![i.to_string(), fmt_num(p.lambda)];
            row.extend(p.x0.iter().chain(&p.y0).map(|v| fmt_num(*v)));
            row.extend([p.amplitude, p.residual, p.drift].map(fmt_num));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Zeros of the seed map (`𝓕` or `Φ`) in `domain`; each may root a branch.
pub fn seed_points(seed_map: &FieldHandle, domain: &DomainBox, params: &DegreeParams) -> Result<Vec<ZeroRecord>> {
    find_zeros_with(seed_map, domain, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectorOptions {
    /// Bound on the norm of the (possibly scaled) periodicity residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest accepted distance between prediction and corrected point.
    pub max_correction: f64,
    /// Relative finite-difference step for the sensitivities.
    pub fd_step: f64,
}

impl Default for CorrectorOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 12,
            max_correction: 0.5,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorrectorMode {
    FixedLambda,
    /// `⟨u − prev, tangent⟩ = ds` with `u = (x₀, λ)`.
    Arclength {
        prev: Vec<f64>,
        tangent: Vec<f64>,
        ds: f64,
    },
}

/// Period-map residuals of one DAE at a fixed resolution.
pub struct Shooter<'a> {
    dae: &'a SemiExplicitDae,
    field: TangentField,
    control: StepControl,
    /// `T·Σ` for drift-free systems, where the residual is divided by λ.
    scaled_limit: Option<FieldHandle>,
}

struct Evaluation {
    /// Residual the corrector drives to zero.
    value: Vec<f64>,
    raw_norm: f64,
    state0: Vec<f64>,
    samples: Vec<FlowSample>,
    drift: f64,
}

impl<'a> Shooter<'a> {
    pub fn new(dae: &'a SemiExplicitDae) -> Result<Self> {
        Self::with_steps(dae, DEFAULT_STEPS_PER_PERIOD)
    }

    pub fn with_steps(dae: &'a SemiExplicitDae, steps_per_period: usize) -> Result<Self> {
        let scaled_limit = match dae.gamma() {
            Some(_) => None,
            None => Some(average_wind(dae, DEFAULT_QUADRATURE_NODES)?.sigma_mean),
        };
        Ok(Self {
            dae,
            field: dae.flow_field(),
            control: StepControl::per_period(dae.period(), steps_per_period),
            scaled_limit,
        })
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled_limit.is_some()
    }

    fn k(&self) -> usize {
        self.dae.constraint().k()
    }

    /// `(x₀, y(x₀))` with `y` solved from `y_guess`; the box is not enforced.
    pub fn lift(&self, x0: &[f64], y_guess: &[f64]) -> Result<Vec<f64>> {
        let opts = ImplicitSolve {
            enforce_domain: false,
            ..ImplicitSolve::default()
        };
        let y = implicit_solve_y(self.dae.constraint(), x0, y_guess, opts)?;
        Ok(x0.iter().chain(&y).copied().collect())
    }

    /// Unscaled residual `x(T) − x₀`.
    pub fn residual(&self, x0: &[f64], y_guess: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let state0 = self.lift(x0, y_guess)?;
        let end = flow_map(&self.field, &state0, 0.0, self.dae.period(), lambda, &self.control)?;
        Ok(end.final_state[..self.k()].iter().zip(x0).map(|(a, b)| a - b).collect())
    }

    fn evaluate(&self, x0: &[f64], y_guess: &[f64], lambda: f64, dense: bool) -> Result<Evaluation> {
        let state0 = self.lift(x0, y_guess)?;
        let control = if dense {
            self.control.with_samples(1)
        } else {
            self.control
        };
        let end = flow_map(&self.field, &state0, 0.0, self.dae.period(), lambda, &control)?;
        let raw: Vec<f64> = end.final_state[..self.k()].iter().zip(x0).map(|(a, b)| a - b).collect();
        let raw_norm = norm(&raw);
        let value = match &self.scaled_limit {
            None => raw,
            Some(sigma) if lambda == 0.0 => {
                let t = self.dae.period();
                sigma.eval(0.0, &state0)?.into_iter().map(|v| t * v).collect()
            }
            Some(_) => raw.into_iter().map(|v| v / lambda).collect(),
        };
        Ok(Evaluation {
            value,
            raw_norm,
            state0,
            samples: end.samples,
            drift: end.max_drift,
        })
    }

    /// Finite-difference columns `∂R/∂x₀ⱼ` and `∂R/∂λ`, evaluated in parallel.
    fn sensitivities(&self, u: &[f64], y_guess: &[f64], base: &[f64], h_rel: f64) -> Result<DMatrix<f64>> {
        let k = self.k();
        let columns: Vec<Result<Vec<f64>>> = (0..=k)
            .into_par_iter()
            .map(|j| {
                let mut v = u.to_vec();
                // drift-free residuals are divided by λ, which amplifies
                // rounding in the λ-difference; use a coarser step there
                let rel = if j == k && self.is_scaled() {
                    h_rel.sqrt() * 0.1
                } else {
                    h_rel
                };
                let h = rel * v[j].abs().max(1.0);
                v[j] += h;
                let e = self.evaluate(&v[..k], y_guess, v[k], false)?;
                Ok(e.value.iter().zip(base).map(|(a, b)| (a - b) / h).collect())
            })
            .collect();
        let mut jac = DMatrix::zeros(k, k + 1);
        for (j, col) in columns.into_iter().enumerate() {
            for (i, v) in col?.into_iter().enumerate() {
                jac[(i, j)] = v;
            }
        }
        Ok(jac)
    }

    fn finish(&self, u: &[f64], e: Evaluation, iterations: usize) -> SolutionPair {
        let k = self.k();
        let n = e.samples.len();
        // the last sample repeats the first for a periodic orbit
        let body = &e.samples[..n.saturating_sub(1).max(1)];
        let dim = e.state0.len();
        let mut mean = vec![0.0; dim];
        for s in body {
            for (m, v) in mean.iter_mut().zip(&s.state) {
                *m += v / body.len() as f64;
            }
        }
        let amplitude = e
            .samples
            .iter()
            .map(|s| norm(&s.state.iter().zip(&mean).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .fold(0.0, f64::max);
        let samples = e
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| i % SAMPLE_STRIDE == 0 || i + 1 == n)
            .map(|(_, s)| s.clone())
            .collect();
        SolutionPair {
            lambda: u[k],
            x0: u[..k].to_vec(),
            y0: e.state0[k..].to_vec(),
            period: self.dae.period(),
            residual: e.raw_norm,
            amplitude,
            drift: e.drift,
            iterations,
            samples,
        }
    }

    /// Newton from the prediction `(x₀, λ)`; `y_guess` seeds the algebraic solve.
    pub fn correct(
        &self,
        x0: &[f64],
        lambda: f64,
        y_guess: &[f64],
        mode: &CorrectorMode,
        opts: &CorrectorOptions,
    ) -> Result<SolutionPair> {
        let k = self.k();
        if x0.len() != k || y_guess.len() != self.dae.constraint().s() {
            return Err(Error::InvalidInput("prediction has the wrong dimension".into()));
        }
        if let CorrectorMode::Arclength { prev, tangent, .. } = mode {
            if prev.len() != k + 1 || tangent.len() != k + 1 {
                return Err(Error::InvalidInput("arclength data must have k + 1 components".into()));
            }
        }
        let failure = |e: Error| Error::CorrectorFailure(e.to_string());
        let predicted: Vec<f64> = x0.iter().copied().chain([lambda]).collect();
        let mut u = predicted.clone();
        let mut y = y_guess.to_vec();
        for iter in 0..=opts.max_iter {
            let e = self.evaluate(&u[..k], &y, u[k], true).map_err(failure)?;
            y = e.state0[k..].to_vec();
            let arc = match mode {
                CorrectorMode::FixedLambda => 0.0,
                CorrectorMode::Arclength { prev, tangent, ds } => {
                    u.iter()
                        .zip(prev)
                        .zip(tangent)
                        .map(|((a, p), t)| (a - p) * t)
                        .sum::<f64>()
                        - ds
                }
            };
            let r = norm(&e.value);
            if !r.is_finite() {
                return Err(Error::CorrectorFailure("residual is not finite".into()));
            }
            if r <= opts.tol && arc.abs() <= opts.tol {
                return Ok(self.finish(&u, e, iter));
            }
            if iter == opts.max_iter {
                break;
            }
            let jac = self.sensitivities(&u, &y, &e.value, opts.fd_step).map_err(failure)?;
            let delta: Vec<f64> = match mode {
                CorrectorMode::FixedLambda => {
                    let a = jac.columns(0, k).into_owned();
                    let dx = solve(a, -DVector::from_column_slice(&e.value))?;
                    dx.iter().copied().chain([0.0]).collect()
                }
                CorrectorMode::Arclength { tangent, .. } => {
                    let mut a = DMatrix::zeros(k + 1, k + 1);
                    a.rows_mut(0, k).copy_from(&jac);
                    for (j, t) in tangent.iter().enumerate() {
                        a[(k, j)] = *t;
                    }
                    let mut rhs = DVector::zeros(k + 1);
                    for i in 0..k {
                        rhs[i] = -e.value[i];
                    }
                    rhs[k] = -arc;
                    solve(a, rhs)?.iter().copied().collect()
                }
            };
            for (a, d) in u.iter_mut().zip(&delta) {
                *a += d;
            }
            let moved = norm(&u.iter().zip(&predicted).map(|(a, b)| a - b).collect::<Vec<_>>());
            if moved > opts.max_correction {
                return Err(Error::CorrectorFailure(format!(
                    "correction {moved:.3e} exceeds the limit {:.3e}",
                    opts.max_correction
                )));
            }
        }
        Err(Error::CorrectorFailure(format!(
            "no convergence in {} iterations",
            opts.max_iter
        )))
    }

    /// Unit tangent of the solution curve at a converged point, oriented so
    /// that λ increases.
    fn tangent(&self, pair: &SolutionPair, opts: &CorrectorOptions) -> Result<Vec<f64>> {
        let k = self.k();
        let u = pair.unknowns();
        let e = self.evaluate(&pair.x0, &pair.y0, pair.lambda, false)?;
        let jac = self.sensitivities(&u, &pair.y0, &e.value, opts.fd_step)?;
        let a = jac.columns(0, k).into_owned();
        let rhs = -jac.column(k).into_owned();
        let dx = solve(a, rhs)?;
        let mut t: Vec<f64> = dx.iter().copied().chain([1.0]).collect();
        let n = norm(&t);
        t.iter_mut().for_each(|v| *v /= n);
        Ok(t)
    }
}

fn solve(a: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    a.lu()
        .solve(&rhs)
        .filter(|d| d.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::CorrectorFailure("singular shooting jacobian".into()))
}

/// First `k` components of `period_map((x₀, y(x₀)), λ) − x₀`.
pub fn shooting_residual(dae: &SemiExplicitDae, x0: &[f64], y_guess: &[f64], lambda: f64) -> Result<Vec<f64>> {
    Shooter::new(dae)?.residual(x0, y_guess, lambda)
}

pub fn correct(
    dae: &SemiExplicitDae,
    x0: &[f64],
    lambda: f64,
    y_guess: &[f64],
    mode: &CorrectorMode,
    opts: &CorrectorOptions,
) -> Result<SolutionPair> {
    Shooter::new(dae)?.correct(x0, lambda, y_guess, mode, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceParams {
    pub ds: f64,
    pub lambda_max: f64,
    pub max_steps: usize,
    /// Box for the initial points `(x₀, y₀)`; the DAE's domain if `None`.
    /// Trajectories themselves may make excursions outside it.
    pub domain: Option<DomainBox>,
    pub corrector: CorrectorOptions,
    pub steps_per_period: usize,
    /// Times `ds` is halved after a failed correction before giving up.
    pub max_halvings: usize,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            ds: 0.02,
            lambda_max: 1.0,
            max_steps: 500,
            domain: None,
            corrector: CorrectorOptions::default(),
            steps_per_period: DEFAULT_STEPS_PER_PERIOD,
            max_halvings: 5,
        }
    }
}

/// Follow the branch rooted at the seed zero `(p, q)` from `λ = 0`.
pub fn trace_branch(dae: &SemiExplicitDae, seed: &ZeroRecord, params: &TraceParams) -> Result<Branch> {
    let c = dae.constraint();
    let k = c.k();
    if seed.location.len() != c.dim() {
        return Err(Error::InvalidInput(format!(
            "seed has {} components, expected {}",
            seed.location.len(),
            c.dim()
        )));
    }
    if !(params.ds > 0.0) || !(params.lambda_max >= 0.0) {
        return Err(Error::InvalidInput("need ds > 0 and lambda_max >= 0".into()));
    }
    let domain = params.domain.clone().unwrap_or_else(|| c.domain().clone());
    let shooter = Shooter::with_steps(dae, params.steps_per_period)?;
    let opts = params.corrector;

    let root = shooter
        .correct(
            &seed.location[..k],
            0.0,
            &seed.location[k..],
            &CorrectorMode::FixedLambda,
            &opts,
        )
        .map_err(|e| Error::CorrectorFailure(format!("seed did not converge: {e}")))?;
    let mut pairs = vec![root];
    let done = |pairs: Vec<SolutionPair>, termination, detail| {
        Ok(Branch {
            pairs,
            seed: seed.clone(),
            termination,
            detail,
        })
    };
    if params.lambda_max == 0.0 {
        return done(pairs, Termination::LambdaMax, None);
    }

    let mut tangent = shooter
        .tangent(&pairs[0], &opts)
        .map_err(|e| Error::CorrectorFailure(format!("first step: {e}")))?;
    let mut ds = params.ds;
    loop {
        if pairs.len() > params.max_steps {
            return done(pairs, Termination::MaxSteps, None);
        }
        let last = pairs.last().expect("branch is never empty");
        let prev = last.unknowns();
        let mut halvings = 0;
        let next = loop {
            let guess: Vec<f64> = prev.iter().zip(&tangent).map(|(p, t)| p + ds * t).collect();
            let mode = CorrectorMode::Arclength {
                prev: prev.clone(),
                tangent: tangent.clone(),
                ds,
            };
            match shooter.correct(&guess[..k], guess[k], &last.y0, &mode, &opts) {
                Ok(p) => break Ok(p),
                Err(e) if halvings == params.max_halvings => break Err(e),
                Err(_) => {
                    halvings += 1;
                    ds *= 0.5;
                }
            }
        };
        let next = match next {
            Ok(p) => p,
            Err(e) if pairs.len() == 1 => {
                return Err(Error::CorrectorFailure(format!("first step: {e}")));
            }
            Err(e) => return done(pairs, Termination::CorrectorFailure, Some(e.to_string())),
        };
        if next.lambda < 0.0 {
            return done(pairs, Termination::ReturnedToZero, None);
        }
        if !domain.contains(&next.state0()) {
            return done(
                pairs,
                Termination::LeftDomain,
                Some(format!("next point {:?}", next.state0())),
            );
        }
        if next.lambda >= params.lambda_max {
            // land on λ_max by linear interpolation and a fixed-λ correction
            let last = pairs.last().expect("branch is never empty");
            let w = (params.lambda_max - last.lambda) / (next.lambda - last.lambda);
            let x: Vec<f64> = last.x0.iter().zip(&next.x0).map(|(a, b)| a + w * (b - a)).collect();
            let y: Vec<f64> = last.y0.iter().zip(&next.y0).map(|(a, b)| a + w * (b - a)).collect();
            match shooter.correct(&x, params.lambda_max, &y, &CorrectorMode::FixedLambda, &opts) {
                Ok(p) if domain.contains(&p.state0()) => {
                    pairs.push(p);
                    return done(pairs, Termination::LambdaMax, None);
                }
                Ok(p) => {
                    return done(
                        pairs,
                        Termination::LeftDomain,
                        Some(format!("next point {:?}", p.state0())),
                    )
                }
                Err(e) => return done(pairs, Termination::CorrectorFailure, Some(e.to_string())),
            }
        }
        let secant: Vec<f64> = next.unknowns().iter().zip(&prev).map(|(a, b)| a - b).collect();
        let n = norm(&secant);
        tangent = secant.into_iter().map(|v| v / n).collect();
        pairs.push(next);
        if halvings == 0 {
            ds = (2.0 * ds).min(params.ds);
        }
    }
}
