//! Numerical verification of surfaces with parallel mean curvature vector
//! in product spaces `M^n(c) x R`.
//!
//! The pipeline is: a [`catalog`] entry supplies a chart into a
//! [`spaceform`] model; [`immersion`] builds orthonormal frames and the
//! second fundamental form; [`invariants`] evaluates the quadratic form `Q`,
//! the traceless operator `S`, Gaussian curvature and the identity residuals
//! on top of the finite-difference machinery in [`calculus`]; [`cli`] turns a
//! run configuration into a deterministic JSON report.

pub mod calculus;
pub mod catalog;
pub mod cli;
pub mod error;
pub mod immersion;
pub mod invariants;
pub mod real;
pub mod spaceform;

pub use error::{GeomError, Result};
pub use real::{Dd, Real};
