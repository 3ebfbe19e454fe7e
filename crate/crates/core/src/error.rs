use thiserror::Error;

/// Errors produced by the modeling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("empty node: X^T X is zero")]
    EmptyNode,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
