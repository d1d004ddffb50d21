//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (bad bucket count, cluster count, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Tensor or feature-vector shape mismatch.
    #[error("shape error: {0}")]
    Shape(String),

    /// Hashed id outside its bucket range, or posting offset out of bounds.
    #[error("index out of range: {0}")]
    OutOfRange(String),

    /// Empty or otherwise unusable dataset.
    #[error("data error: {0}")]
    Data(String),

    /// Non-finite loss or gradient during training.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A metric was requested over inputs where it is undefined.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Malformed or incompatible serialized artifact.
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format { offset, reason: reason.into() }
    }
}
