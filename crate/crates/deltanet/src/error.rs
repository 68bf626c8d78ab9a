use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data file not found: {0}")]
    DataNotFound(PathBuf),

    #[error("corrupt data file {path}: {reason}")]
    DataCorrupt { path: PathBuf, reason: String },

    #[error("checkpoint has bad magic bytes")]
    CheckpointBadMagic,

    #[error("unsupported checkpoint format version {0}")]
    CheckpointBadVersion(u32),

    #[error("checkpoint file is truncated")]
    CheckpointTruncated,

    #[error("malformed checkpoint: {0}")]
    CheckpointMalformed(String),

    #[error("cost mismatch at layer {layer}: analytical {analytic} vs network {actual}")]
    CostMismatch {
        layer: String,
        analytic: u64,
        actual: u64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
