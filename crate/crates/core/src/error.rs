use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value encountered: {0}")]
    Numeric(String),
    #[error("diffusion step {step} outside 0..={max}")]
    StepOutOfRange { step: usize, max: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("collection failed: {0}")]
    CollectionFailed(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("replay diverged at tick {tick} (deviation {deviation:e})")]
    ReplayDiverged { tick: usize, deviation: f64 },
    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
