use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("output is not trimmed (must be empty or start and end with 1)")]
    NotTrimmed,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid process: {0}")]
    InvalidProcess(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
