use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreqError {
    #[error("empty input")]
    Empty,
    #[error("unsupported rank {0}: expected 1 to 4 axes")]
    Rank(usize),
    #[error("invalid shape {shape:?}: {reason}")]
    Shape { shape: Vec<usize>, reason: String },
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("threshold can only shrink: current {current}, requested {requested}")]
    ThresholdGrowth { current: usize, requested: usize },
    #[error("backward called before forward on layer `{0}`")]
    NoForwardState(String),
    #[error("training diverged at epoch {epoch}, step {step}: loss is {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },
    #[error("format error in {field}: {reason}")]
    Format { field: &'static str, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FreqError {
    fn from(err: std::io::Error) -> Self {
        FreqError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FreqError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> FreqError {
    FreqError::InvalidArgument { name, reason: reason.into() }
}

pub(crate) fn format_err(field: &'static str, reason: impl Into<String>) -> FreqError {
    FreqError::Format { field, reason: reason.into() }
}
