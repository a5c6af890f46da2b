//! Error types shared across the library.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration (bad parameters, unsolvable scheme, unknown preset).
    #[error("config error: {0}")]
    Config(String),

    /// Array shape or basis mismatch between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Numerical failure other than a signaled blow-up (degenerate solve, NaN input).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Non-finite state encountered mid-step; the solver converts this into a
    /// blow-up signal rather than a hard failure.
    #[error("non-finite state: {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
