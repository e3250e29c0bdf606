use crate::expr::{EvalError, ParseError};

/// Coarse failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Regularity,
    Admissibility,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("problem file line {line}: {message}")]
    Problem { line: usize, message: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("field is not admissible: boundary minimum {boundary_min:e} is below {threshold:e}")]
    Admissibility { boundary_min: f64, threshold: f64 },
    #[error("zero found outside every region at {location:?}")]
    ZeroOutsideRegions { location: Vec<f64> },
    #[error(
        "degenerate zero at {location:?} (jacobian determinant {determinant:e}); \
         use the winding oracle or perturb the box"
    )]
    DegenerateZero { location: Vec<f64>, determinant: f64 },
    #[error("partial jacobian in the algebraic variables is singular at {location:?} (det {determinant:e})")]
    SingularPartial { location: Vec<f64>, determinant: f64 },
    #[error("sign of det of the algebraic jacobian is not constant: {positive} positive, {negative} negative samples")]
    NonConstantSign { positive: usize, negative: usize },
    #[error("no point of the manifold found among the samples")]
    EmptySample,
    #[error("field nearly vanishes on the boundary at {location:?} (|F| = {norm:e})")]
    BoundaryZero { location: Vec<f64>, norm: f64 },
    #[error("winding angle step {step} exceeds pi after maximal refinement")]
    AngleStep { step: f64 },
    #[error("newton iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("left the domain box at {location:?}")]
    LeftDomain { location: Vec<f64> },
    #[error("integration failed at t = {t}: step size underflow")]
    StepUnderflow { t: f64 },
    #[error("corrector failed: {0}")]
    CorrectorFailure(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse(_) | Error::Problem { .. } | Error::InvalidInput(_) => ErrorKind::Parse,
            Error::SingularPartial { .. } | Error::NonConstantSign { .. } | Error::EmptySample => ErrorKind::Regularity,
            Error::Admissibility { .. }
            | Error::ZeroOutsideRegions { .. }
            | Error::DegenerateZero { .. }
            | Error::BoundaryZero { .. } => ErrorKind::Admissibility,
            Error::Eval(_)
            | Error::AngleStep { .. }
            | Error::NonConvergence(_)
            | Error::LeftDomain { .. }
            | Error::StepUnderflow { .. }
            | Error::CorrectorFailure(_) => ErrorKind::Numeric,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
