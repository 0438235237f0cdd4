use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty results")]
    EmptyResults,

    #[error("attack budget exhausted for input {input_id}")]
    AttackBudgetExhausted { input_id: u64 },

    #[error("dataset format: {0}")]
    DatasetFormat(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
