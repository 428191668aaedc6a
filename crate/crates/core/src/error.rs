use thiserror::Error;

/// Errors produced by the shiftnorm toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite input")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate source: source variance must be > 0 (feature {feature})")]
    DegenerateSource { feature: usize },

    #[error("zero variance in feature {feature}")]
    ZeroVariance { feature: usize },

    #[error("empty statistics cannot be used here")]
    EmptyStats,

    #[error("train-mode batch too small: need at least 2 samples, got {0}")]
    TrainBatchTooSmall(usize),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
