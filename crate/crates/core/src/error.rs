use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A user-supplied specification or configuration is malformed.
    #[error("validation error: {0}")]
    Validation(String),

    /// A modal output coefficient that must be non-zero vanished.
    #[error("output coefficient c_{index} is zero; the mode is unobservable")]
    ZeroOutputCoefficient { index: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The semidefinite solver broke down numerically.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Unexpected internal state (a bug rather than bad input).
    #[error("internal error: {0}")]
    Internal(String),

    #[error("unknown {kind} '{name}'")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
