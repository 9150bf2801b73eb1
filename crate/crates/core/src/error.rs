use thiserror::Error;

/// Errors produced by the kernels, parsers and harness routines.
#[derive(Debug, Error)]
pub enum PrismError {
    /// Tensor or sequence dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// A parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// Malformed serialized input (PRFM payloads, config text, CLI values).
    #[error("format error: {0}")]
    Format(String),
    /// An operation was invoked before its prerequisite state existed.
    #[error("state error: {0}")]
    State(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PrismError> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(PrismError::Shape(msg.into()))
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(PrismError::Parameter(msg.into()))
}
