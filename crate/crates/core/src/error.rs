use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("length error: expected {expected} bits, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("degenerate signal: {0}")]
    Degenerate(String),
    #[error("numerical error at iteration {iter}: {what}")]
    Numerical { iter: usize, what: String },
    #[error("transmitted message list is empty")]
    EmptyTruth,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("code construction failed: {0}")]
    Code(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
