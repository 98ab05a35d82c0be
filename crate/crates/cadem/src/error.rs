//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CademError {
    /// Matrix or tensor dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An internal contract was broken (e.g. value used on the wrong tape).
    #[error("contract violation: {0}")]
    Contract(String),

    /// NaN or infinity appeared where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Configuration is inconsistent or out of range.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed data file (graph JSON, feature CSV, checkpoint).
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CademError>;
