//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A loss oracle produced NaN or infinity for a concrete hypothesis.
    #[error("loss evaluation failed: value {value} at hypothesis {hypothesis}")]
    EvaluationFailure { hypothesis: String, value: f64 },

    /// Bayes update with zero total evidence mass.
    #[error("undefined posterior: all prior-likelihood products are zero")]
    UndefinedPosterior,

    /// Divergence guard tripped during an iterative run.
    #[error("run diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
