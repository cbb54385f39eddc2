use thiserror::Error;

/// Errors surfaced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error("invalid feature for item {item_id}: {reason}")]
    InvalidFeature { item_id: u64, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },
    #[error("corpus size {corpus} exceeds id capacity {capacity}")]
    CapacityExceeded { corpus: usize, capacity: usize },
    #[error("sequence length {len} exceeds maximum {max}")]
    LengthError { len: usize, max: usize },
    #[error("history is empty")]
    EmptyHistory,
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error("checkpoint error: {0}")]
    CheckpointError(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("data format error: {0}")]
    DataFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;
