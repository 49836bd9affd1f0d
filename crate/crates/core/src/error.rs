use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Two bodies (1-based indices) closer than the hard proximity guard.
    #[error("bodies {i} and {j} are {distance:e} apart, below the collision guard")]
    CollisionProximity { i: usize, j: usize, distance: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid index: {0}")]
    InvalidIndex(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("step size {h:e} underflow at t = {t}")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("event function does not change sign near t = {t_guess}")]
    NoSignChange { t_guess: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("ambiguous configuration label: residuals {best:e} and {second:e} are too close")]
    AmbiguousLabel { best: f64, second: f64 },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("no physical solution: {0}")]
    NoPhysicalSolution(String),

    #[error("continuation corrector diverged after {halvings} step halvings")]
    CorrectorDivergence { halvings: usize },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
