use thiserror::Error;

/// Errors raised by the numerical modules. Each variant names the failing
/// condition; the harness maps them onto exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("field has nonzero mean {mean:e} (tolerance {tol:e})")]
    NonZeroMean { mean: f64, tol: f64 },
    #[error("iterative cell solve did not converge: relative residual {residual:e} after {iterations} iterations")]
    SingularSystem { residual: f64, iterations: usize },
    #[error("field is not divergence free: residual {0:e}")]
    NotDivergenceFree(f64),
    #[error("invalid coefficient field: {0}")]
    InvalidCoefficient(String),
    #[error("potential is not confining: {0}")]
    NonConfining(String),
    #[error("polynomial degree {degree} exceeds cap {cap}")]
    DegreeCapExceeded { degree: usize, cap: usize },
    #[error("truncation unsafe: {0}")]
    TruncationUnsafe(String),
    #[error("spectral gap unresolved for index {0}")]
    GapUnresolved(usize),
    #[error("right-hand side not orthogonal to eigenspace: projection {0:e}")]
    NotOrthogonal(f64),
    #[error("cell right-hand side for level {level}, multi-index {alpha:?} has mean {mean:e}")]
    MeanNotZero { level: usize, alpha: Vec<u32>, mean: f64 },
    #[error("eigenvalue index {index} belongs to a cluster of size {size}")]
    NotSimple { index: usize, size: usize },
    #[error("splitting matrix has (nearly) repeated eigenvalues: spacing {0:e}")]
    DegenerateD(f64),
    #[error("solvability violated at level {level}, branch {branch}: {value:e}")]
    SolvabilityViolated { level: usize, branch: usize, value: f64 },
    #[error("epsilon too large: eps*lambda^(3/2)/gap = {0} >= 1")]
    EpsilonTooLarge(f64),
    #[error("grid too coarse: h = {h}, eps = {eps}")]
    GridTooCoarse { h: f64, eps: f64 },
    #[error("grid too large: {0}")]
    GridTooLarge(String),
    #[error("eigensolver failed to converge: {0}")]
    ConvergenceFailure(String),
    #[error("eigenpair matching ambiguous: dominance {0}")]
    MatchingAmbiguous(f64),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("insufficient points: {0}")]
    InsufficientPoints(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidCoefficient(_)
                | Error::NonConfining(_)
                | Error::GridMismatch(_)
                | Error::DegreeCapExceeded { .. }
                | Error::Unsupported(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
