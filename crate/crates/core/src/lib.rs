//! Two-scale spectral asymptotics for `-div a(x/eps) grad + W`.
//!
//! Modules:
//! - [`torus`]: periodic fields, cell problems and stream matrices;
//! - [`classical`]: first- and second-order correctors and homogenized tensors;
//! - [`hermite`]: the homogenized operator in a Hermite basis;
//! - [`expansion`]: corrector tables and eigenvalue/eigenfunction recursion;
//! - [`reference`]: finite-difference reference eigensolver and rate fits;
//! - [`harness`]: configuration, pipeline and invariant checks.

pub mod classical;
pub mod error;
pub mod harness;
pub mod expansion;
pub mod hermite;
pub mod poly;
pub mod reference;
pub mod torus;

pub use error::{Error, Result};
pub use poly::{MultiIndex, SlowPolynomial};
pub use torus::{CoefficientField, CoefficientSpec, PeriodicField, TorusGrid};
