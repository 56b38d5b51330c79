use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("generator failed for customer {customer}: {message}")]
    Generator { customer: usize, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("incomplete solution: {0}")]
    IncompleteSolution(String),

    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("training aborted: {0}")]
    Training(String),

    #[error("instance too large for exact solver: {size} customers (limit {limit})")]
    TooLarge { size: usize, limit: usize },

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
