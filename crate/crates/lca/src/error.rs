//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or configuration value.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// Tensor or sequence dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input exceeds a configured capacity (e.g. sequence longer than the
    /// encoder's positional table).
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A sampling precondition could not be satisfied (e.g. no qualifying
    /// donor shot for a position).
    #[error("sampling failed: {0}")]
    Sampling(String),

    /// Non-finite values where finite arithmetic is required.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A binary file has the wrong magic, version, or layout.
    #[error("format error: {0}")]
    Format(String),

    /// A binary file ends early or has inconsistent lengths.
    #[error("corrupt file: {0}")]
    Corrupt(String),

    /// Payload fails validation (e.g. NaN embeddings on disk).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error is attributable to user input (bad flags, bad
    /// files, unsatisfiable requests) rather than an internal failure.
    /// The CLI maps these to exit code 1; everything else exits 2.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Param(_)
                | Error::Shape(_)
                | Error::Capacity(_)
                | Error::Sampling(_)
                | Error::Format(_)
                | Error::Corrupt(_)
                | Error::Validation(_)
        )
    }
}
