//! Scalar math expressions over named variables.
//!
//! Expressions are parsed once into an immutable tree and then evaluated
//! either in plain `f64` arithmetic or with [`Dual`] numbers, which yields
//! exact first derivatives (forward mode, one pass per variable).
//!
//! Supported syntax: decimal literals, declared variable names, `pi`,
//! `+ - * /`, unary `-`, `^` with an integer literal exponent, and the
//! functions `sin cos exp log sqrt abs`.

mod dual;
mod parser;

use std::fmt;
use std::sync::Arc;

pub use dual::{Dual, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared variable `{name}` at offset {offset}")]
    UndeclaredVariable { name: String, offset: usize },
    #[error("exponent at offset {offset} must be an integer literal")]
    NonIntegerExponent { offset: usize },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("no variables declared")]
    NoVariables,
}

impl ParseError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UndeclaredVariable { offset, .. }
            | ParseError::NonIntegerExponent { offset }
            | ParseError::UnknownFunction { offset, .. } => Some(*offset),
            ParseError::NoVariables => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub const ALL: [Func; 6] = [Func::Sin, Func::Cos, Func::Exp, Func::Log, Func::Sqrt, Func::Abs];
}

/// Expression tree node. Variables are indices into the owning
/// [`Expression`]'s declared name list.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

impl Node {
    /// Evaluate with a caller-chosen scalar type; `var` maps a variable
    /// index to its value.
    /// An intermediate overflow is an error even if the result would be
    /// finite (`0/exp(800)`): the value could not be differentiated.
    pub fn eval_with<S: Scalar>(&self, var: &dyn Fn(usize) -> S) -> Result<S, EvalError> {
        let r = match self {
            Node::Const(c) => S::constant(*c),
            Node::Var(i) => var(*i),
            Node::Neg(a) => -a.eval_with(var)?,
            Node::Binary(op, a, b) => {
                let a = a.eval_with(var)?;
                let b = b.eval_with(var)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b.value() == 0.0 {
                            return Err(EvalError::Domain("division by zero".into()));
                        }
                        a / b
                    }
                }
            }
            Node::Pow(a, n) => {
                let a = a.eval_with(var)?;
                if *n < 0 && a.value() == 0.0 {
                    return Err(EvalError::Domain("zero raised to a negative power".into()));
                }
                a.powi(*n)
            }
            Node::Call(f, a) => {
                let a = a.eval_with(var)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a.value() <= 0.0 {
                            return Err(EvalError::Domain(format!("log of non-positive value {}", a.value())));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a.value() < 0.0 {
                            return Err(EvalError::Domain(format!("sqrt of negative value {}", a.value())));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                }
            }
        };
        if r.value().is_finite() {
            Ok(r)
        } else {
            Err(EvalError::Domain(format!("non-finite intermediate {}", r.value())))
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Node::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Node::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Node::Neg(_) => 3,
            Node::Pow(..) => 4,
            Node::Const(_) | Node::Var(_) | Node::Call(..) => 5,
        }
    }

    /// Tree depth; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Node::Const(_) | Node::Var(_) => 1,
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => 1 + a.depth(),
            Node::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    fn write(&self, names: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |n: &Node, paren: bool, f: &mut fmt::Formatter<'_>| -> fmt::Result {
            if paren {
                f.write_str("(")?;
                n.write(names, f)?;
                f.write_str(")")
            } else {
                n.write(names, f)
            }
        };
        match self {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => f.write_str(&names[*i]),
            Node::Neg(a) => {
                f.write_str("-")?;
                child(a, a.precedence() < 3, f)
            }
            Node::Binary(op, a, b) => {
                let p = self.precedence();
                child(a, a.precedence() < p, f)?;
                f.write_str(match op {
                    BinaryOp::Add => " + ",
                    BinaryOp::Sub => " - ",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                })?;
                child(b, b.precedence() <= p, f)
            }
            Node::Pow(a, n) => {
                child(a, a.precedence() < 4, f)?;
                if *n < 0 {
                    write!(f, "^({n})")
                } else {
                    write!(f, "^{n}")
                }
            }
            Node::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(names, f)?;
                f.write_str(")")
            }
        }
    }
}

/// A parsed expression together with the variable names it was declared
/// over. Immutable; cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    vars: Arc<[String]>,
}

impl Expression {
    /// Parse `source` over the declared variables.
    pub fn parse(source: &str, declared_vars: &[impl AsRef<str>]) -> Result<Self, ParseError> {
        Self::parse_with_constants(source, declared_vars, &[])
    }

    /// Parse, substituting named constants by their values.
    pub fn parse_with_constants(
        source: &str,
        declared_vars: &[impl AsRef<str>],
        constants: &[(String, f64)],
    ) -> Result<Self, ParseError> {
        if declared_vars.is_empty() {
            return Err(ParseError::NoVariables);
        }
        let vars: Vec<String> = declared_vars.iter().map(|v| v.as_ref().to_string()).collect();
        let root = parser::Parser::new(source, &vars, constants)?.parse()?;
        Ok(Self {
            root,
            vars: vars.into(),
        })
    }

    pub fn from_node(root: Node, vars: &[impl AsRef<str>]) -> Self {
        let vars: Vec<String> = vars.iter().map(|v| v.as_ref().to_string()).collect();
        Self {
            root,
            vars: vars.into(),
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn evaluate(&self, env: &Environment) -> Result<f64, EvalError> {
        self.check_env(env)?;
        self.eval_slice(env.values())
    }

    /// Evaluate at raw values in declared-variable order.
    pub fn eval_slice(&self, values: &[f64]) -> Result<f64, EvalError> {
        if values.len() != self.vars.len() {
            return Err(EvalError::Arity {
                expected: self.vars.len(),
                got: values.len(),
            });
        }
        let v = self.root.eval_with(&|i| values[i])?;
        finite(v)
    }

    pub fn gradient(&self, env: &Environment) -> Result<Vec<f64>, EvalError> {
        self.check_env(env)?;
        let mut grad = vec![0.0; self.vars.len()];
        self.value_and_gradient(env.values(), &mut grad)?;
        Ok(grad)
    }

    /// Value and the partial derivatives with respect to the first
    /// `grad.len()` declared variables.
    pub fn value_and_gradient(&self, values: &[f64], grad: &mut [f64]) -> Result<f64, EvalError> {
        if values.len() != self.vars.len() || grad.len() > values.len() {
            return Err(EvalError::Arity {
                expected: self.vars.len(),
                got: values.len(),
            });
        }
        let mut value = f64::NAN;
        for (j, g) in grad.iter_mut().enumerate() {
            let d = self
                .root
                .eval_with(&|i| Dual::new(values[i], if i == j { 1.0 } else { 0.0 }))?;
            value = d.re;
            if !d.eps.is_finite() {
                return Err(EvalError::Domain(format!(
                    "derivative with respect to `{}` is not finite",
                    self.vars[j]
                )));
            }
            *g = d.eps;
        }
        if grad.is_empty() {
            return self.eval_slice(values);
        }
        finite(value)
    }

    fn check_env(&self, env: &Environment) -> Result<(), EvalError> {
        if env.names() != &*self.vars {
            return Err(EvalError::Arity {
                expected: self.vars.len(),
                got: env.len(),
            });
        }
        Ok(())
    }
}

fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::Domain(format!("non-finite result {v}")))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(&self.vars, f)
    }
}

/// Ordered variable bindings.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    names: Vec<String>,
    values: Vec<f64>,
}

impl Environment {
    pub fn new(bindings: &[(&str, f64)]) -> Result<Self, EvalError> {
        let mut names: Vec<String> = Vec::with_capacity(bindings.len());
        for (n, _) in bindings {
            if names.iter().any(|m| m == n) {
                return Err(EvalError::Domain(format!("duplicate binding `{n}`")));
            }
            names.push(n.to_string());
        }
        Ok(Self {
            names,
            values: bindings.iter().map(|(_, v)| *v).collect(),
        })
    }

    /// Bind `values` to the variables of `expr`, in declaration order.
    pub fn for_expression(expr: &Expression, values: &[f64]) -> Result<Self, EvalError> {
        if values.len() != expr.vars().len() {
            return Err(EvalError::Arity {
                expected: expr.vars().len(),
                got: values.len(),
            });
        }
        Ok(Self {
            names: expr.vars().to_vec(),
            values: values.to_vec(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
