//! Finite-difference reference eigensolver on a truncated box, eigenpair
//! matching and convergence-rate fits.

mod banded;
mod compare;
mod fd;

pub use banded::{lowest_eigenpairs, BandCholesky, BandMatrix};
pub use compare::{fit_rate, function_errors_1d, match_modes, ErrorRow, FunctionErrors, RateFit, DOMINANCE};
pub use fd::{
    quadratic_lower_bound, solve_leps, truncation_radius, Axis1D, FineGrid, Grid2D, Modes, ReferenceOptions,
    ReferenceSpectrum,
};
