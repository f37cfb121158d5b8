use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate distribution: {0}")]
    Degenerate(String),
    #[error("impossible likelihood: {0}")]
    ImpossibleLikelihood(String),
    #[error("stick extension ran away after {0} new sticks (slice variable underflow?)")]
    RunawayExtension(usize),
    #[error("state corruption: {0}")]
    StateCorruption(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
