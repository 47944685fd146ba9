use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ingestion error in {path} at byte offset {offset}: {reason}")]
    Ingestion {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("non-finite loss {loss} at iteration {iteration}")]
    NonFiniteLoss { loss: f64, iteration: usize },

    #[error("checkpoint corruption: {0}")]
    Corruption(String),

    #[error("unsupported checkpoint version {0}")]
    Version(u32),

    #[error("architecture tag mismatch: expected {expected}, found {found}")]
    ArchTagMismatch { expected: String, found: String },

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
