//! Crate-wide error type.

use thiserror::Error;

/// Unified error for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor, state, or parameter vector had the wrong dimensions.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A NaN or infinity appeared where only finite values are allowed.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An integration chain blew up; `step` is the first bad step.
    #[error("trajectory diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    /// Training produced a non-finite loss and was aborted.
    #[error("numeric abort at epoch {epoch}: training loss is not finite")]
    NumericAbort { epoch: usize },

    /// A configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An input file or in-memory dataset failed validation.
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
