use thiserror::Error;

/// Errors raised by problem construction, the oracles and the solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error(
        "invalid box bounds at index {index}: lower {lower} must be finite and below upper {upper}"
    )]
    InvalidBounds {
        index: usize,
        lower: f64,
        upper: f64,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty sample set")]
    EmptySamples,

    #[error("gradient is zero; the iteration has already converged")]
    ZeroGradient,

    #[error("matrix `{0}` is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("subproblem failed at iteration {iteration}: {reason}")]
    Subproblem { iteration: usize, reason: String },

    #[error("non-finite value in {what} at iteration {iteration}")]
    NonFinite {
        what: &'static str,
        iteration: usize,
    },

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
