use thiserror::Error;

/// Errors raised across the lab.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes, parameters or experiment settings.
    #[error("configuration error: {0}")]
    Config(String),
    /// Data that violates a numeric precondition (non-finite values, bad labels).
    #[error("input error: {0}")]
    Input(String),
    /// An API was called with arguments that do not belong together.
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed IDX container.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    /// Optimization produced a non-finite value.
    #[error("training error: {0}")]
    Training(String),
    /// Metric could not be computed (e.g. only one class present).
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
