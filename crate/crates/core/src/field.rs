//! Vector-field evaluation interface shared by every numerical module.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::expr::{EvalError, Expression, ParseError};

/// A map `ℝⁿ → ℝᵐ`, optionally depending on time.
///
/// Implementations must be deterministic and re-entrant.
pub trait VectorField: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), EvalError>;

    fn is_time_dependent(&self) -> bool {
        false
    }

    /// `output_dim × input_dim` Jacobian with respect to `x`. The default
    /// uses central differences.
    fn jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        central_difference_jacobian(self, t, x)
    }
}

pub(crate) fn central_difference_jacobian<F: VectorField + ?Sized>(
    field: &F,
    t: f64,
    x: &[f64],
) -> Result<DMatrix<f64>, EvalError> {
    let (n, m) = (field.input_dim(), field.output_dim());
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = x.to_vec();
    let mut plus = vec![0.0; m];
    let mut minus = vec![0.0; m];
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        probe[j] = x[j] + h;
        field.eval_into(t, &probe, &mut plus)?;
        probe[j] = x[j] - h;
        field.eval_into(t, &probe, &mut minus)?;
        probe[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Shared, cheaply clonable handle to a [`VectorField`].
#[derive(Clone)]
pub struct FieldHandle(Arc<dyn VectorField>);

impl fmt::Debug for FieldHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "FieldHandle({} -> {}{})",
            self.input_dim(),
            self.output_dim(),
            if self.is_time_dependent() { ", t" } else { "" }
        )
    }
}

impl FieldHandle {
    pub fn new(field: impl VectorField + 'static) -> Self {
        Self(Arc::new(field))
    }

    pub fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.0.output_dim()
    }

    pub fn is_time_dependent(&self) -> bool {
        self.0.is_time_dependent()
    }

    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        if x.len() != self.input_dim() || out.len() != self.output_dim() {
            return Err(EvalError::Arity {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        self.0.eval_into(t, x, out)
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.output_dim()];
        self.eval_into(t, x, &mut out)?;
        Ok(out)
    }

    pub fn jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        if x.len() != self.input_dim() {
            return Err(EvalError::Arity {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        self.0.jacobian(t, x)
    }

    /// Euclidean norm of the field value.
    pub fn norm_at(&self, t: f64, x: &[f64]) -> Result<f64, EvalError> {
        Ok(norm(&self.eval(t, x)?))
    }

    /// Autonomous closure-backed field with a finite-difference Jacobian.
    pub fn from_fn<F>(input_dim: usize, output_dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::new(FnField {
            input_dim,
            output_dim,
            f: Box::new(move |_, x, out| {
                f(x, out);
                Ok(())
            }),
            time_dependent: false,
        })
    }

    /// Time-dependent closure-backed field.
    pub fn from_time_fn<F>(input_dim: usize, output_dim: usize, f: F) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::new(FnField {
            input_dim,
            output_dim,
            f: Box::new(move |t, x, out| {
                f(t, x, out);
                Ok(())
            }),
            time_dependent: true,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, dim, |x, out| out.copy_from_slice(x))
    }

    /// The field identically zero.
    pub fn zero(input_dim: usize, output_dim: usize) -> Self {
        Self::from_fn(input_dim, output_dim, |_, out| out.fill(0.0))
    }

    /// Concatenate the outputs of fields sharing an input space.
    pub fn stack(parts: Vec<FieldHandle>) -> Self {
        Self::new(StackedField::new(parts))
    }

    /// Pointwise sum of two fields of equal shape.
    pub fn sum(a: FieldHandle, b: FieldHandle) -> Self {
        Self::new(SumField { a, b })
    }

    /// Parse one expression per output component. Variables are the state
    /// names followed, if `time_var` is given, by the time variable.
    pub fn from_expressions(
        sources: &[impl AsRef<str>],
        state_vars: &[impl AsRef<str>],
        time_var: Option<&str>,
        constants: &[(String, f64)],
    ) -> Result<Self, ParseError> {
        Ok(Self::new(ExprField::parse(sources, state_vars, time_var, constants)?))
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

type BoxedFn = Box<dyn Fn(f64, &[f64], &mut [f64]) -> Result<(), EvalError> + Send + Sync>;

struct FnField {
    input_dim: usize,
    output_dim: usize,
    f: BoxedFn,
    time_dependent: bool,
}

impl VectorField for FnField {
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }
    fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }
    fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        (self.f)(t, x, out)
    }
}

/// Field whose components are parsed expressions; Jacobians come from
/// forward-mode differentiation.
#[derive(Debug, Clone)]
pub struct ExprField {
    components: Vec<Expression>,
    state_dim: usize,
    time_dependent: bool,
}

/// Stack buffer size for the variable vector; larger problems fall back to
/// the heap.
const INLINE_VARS: usize = 16;

impl ExprField {
    pub fn parse(
        sources: &[impl AsRef<str>],
        state_vars: &[impl AsRef<str>],
        time_var: Option<&str>,
        constants: &[(String, f64)],
    ) -> Result<Self, ParseError> {
        let mut names: Vec<String> = state_vars.iter().map(|v| v.as_ref().to_string()).collect();
        let state_dim = names.len();
        if let Some(t) = time_var {
            names.push(t.to_string());
        }
        let components = sources
            .iter()
            .map(|s| Expression::parse_with_constants(s.as_ref(), &names, constants))
            .collect::<Result<Vec<_>, _>>()?;
        let time_dependent = time_var.is_some() && components.iter().any(|c| uses_var(c.root(), state_dim));
        Ok(Self {
            components,
            state_dim,
            time_dependent,
        })
    }

    pub fn components(&self) -> &[Expression] {
        &self.components
    }

    fn with_env<R>(&self, t: f64, x: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
        let n = self.components.first().map_or(x.len(), |c| c.vars().len());
        if n <= INLINE_VARS {
            let mut buf = [0.0; INLINE_VARS];
            buf[..x.len()].copy_from_slice(x);
            if n > x.len() {
                buf[x.len()] = t;
            }
            f(&buf[..n])
        } else {
            let mut buf = x.to_vec();
            if n > x.len() {
                buf.push(t);
            }
            f(&buf)
        }
    }
}

fn uses_var(node: &crate::expr::Node, index: usize) -> bool {
    use crate::expr::Node;
    match node {
        Node::Var(i) => *i == index,
        Node::Const(_) => false,
        Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => uses_var(a, index),
        Node::Binary(_, a, b) => uses_var(a, index) || uses_var(b, index),
    }
}

impl VectorField for ExprField {
    fn input_dim(&self) -> usize {
        self.state_dim
    }
    fn output_dim(&self) -> usize {
        self.components.len()
    }
    fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }
    fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.with_env(t, x, |env| {
            for (o, c) in out.iter_mut().zip(&self.components) {
                *o = c.eval_slice(env)?;
            }
            Ok(())
        })
    }
    fn jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut jac = DMatrix::zeros(self.components.len(), self.state_dim);
        let mut row = vec![0.0; self.state_dim];
        self.with_env(t, x, |env| {
            for (i, c) in self.components.iter().enumerate() {
                c.value_and_gradient(env, &mut row)?;
                for (j, g) in row.iter().enumerate() {
                    jac[(i, j)] = *g;
                }
            }
            Ok::<_, EvalError>(())
        })?;
        Ok(jac)
    }
}

struct StackedField {
    parts: Vec<FieldHandle>,
    input_dim: usize,
    output_dim: usize,
}

impl StackedField {
    fn new(parts: Vec<FieldHandle>) -> Self {
        let input_dim = parts.first().map_or(0, FieldHandle::input_dim);
        assert!(
            parts.iter().all(|p| p.input_dim() == input_dim),
            "stacked fields must share an input space"
        );
        let output_dim = parts.iter().map(FieldHandle::output_dim).sum();
        Self {
            parts,
            input_dim,
            output_dim,
        }
    }
}

impl VectorField for StackedField {
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }
    fn is_time_dependent(&self) -> bool {
        self.parts.iter().any(FieldHandle::is_time_dependent)
    }
    fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let mut offset = 0;
        for p in &self.parts {
            let m = p.output_dim();
            p.0.eval_into(t, x, &mut out[offset..offset + m])?;
            offset += m;
        }
        Ok(())
    }
    fn jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut jac = DMatrix::zeros(self.output_dim, self.input_dim);
        let mut offset = 0;
        for p in &self.parts {
            let block = p.0.jacobian(t, x)?;
            jac.rows_mut(offset, block.nrows()).copy_from(&block);
            offset += block.nrows();
        }
        Ok(jac)
    }
}

struct SumField {
    a: FieldHandle,
    b: FieldHandle,
}

impl VectorField for SumField {
    fn input_dim(&self) -> usize {
        self.a.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.a.output_dim()
    }
    fn is_time_dependent(&self) -> bool {
        self.a.is_time_dependent() || self.b.is_time_dependent()
    }
    fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.a.0.eval_into(t, x, out)?;
        let other = self.b.eval(t, x)?;
        for (o, v) in out.iter_mut().zip(other) {
            *o += v;
        }
        Ok(())
    }
    fn jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        Ok(self.a.0.jacobian(t, x)? + self.b.0.jacobian(t, x)?)
    }
}
