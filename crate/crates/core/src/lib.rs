//! Topological degree of tangent vector fields on implicitly defined
//! manifolds `M = g⁻¹(0)`, the reduction of semi-explicit DAEs to ODEs on
//! `M`, and numerical continuation of forced periodic solutions.
//!
//! Problems are data: constraint, drift and forcing are parsed
//! [`expr::Expression`]s, wrapped as [`field::FieldHandle`]s.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(a < b)` is how NaN is rejected

pub mod continuation;
pub mod dae;
pub mod degree;
pub mod error;
pub mod expr;
pub mod field;
pub mod flow;
pub mod manifold;
pub mod problem;
pub mod registry;

pub use continuation::{Branch, SolutionPair, Termination, TraceParams};
pub use dae::SemiExplicitDae;
pub use degree::{DegreeMethod, DegreeParams, DegreeResult, DomainBox, ZeroRecord};
pub use error::{Error, ErrorKind, Result};
pub use field::{FieldHandle, VectorField};
pub use flow::{FlowResult, StepControl};
pub use manifold::{ImplicitConstraint, TangentField};
pub use problem::ProblemFile;
