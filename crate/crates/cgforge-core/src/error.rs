use thiserror::Error;

/// Errors produced by parsing, modeling, training and artifact handling.
#[derive(Debug, Error)]
pub enum CgError {
    /// A malformed line in a JSONL stream, with its 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A structural violation in a program model (overlapping functions,
    /// instruction outside its function, unknown address, ...).
    #[error("model error: {0}")]
    Model(String),

    /// Invalid or insufficient data for an operation (empty corpus, pool
    /// too small, bad dimensions, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Incompatible artifacts: vocabulary hash, policy or architecture
    /// mismatch between models that must agree.
    #[error("mismatch error: {0}")]
    Mismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CgError>;
