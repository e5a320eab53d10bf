use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid crop: original {original:?} larger than padded {padded:?}")]
    InvalidCrop { original: (usize, usize), padded: (usize, usize) },
    #[error("channel mismatch: model expects {expected} input bands, cube has {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("unmapped source label id {0}")]
    UnmappedLabel(u8),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("no labeled pixels")]
    NoLabeledPixels,
    #[error("no supervised pixels")]
    NoSupervisedPixels,
    #[error("unsupported version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("missing sample file {0}")]
    MissingSampleFile(PathBuf),
    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    TruncatedFile { path: PathBuf, expected: u64, found: u64 },
    #[error("checksum failure for {0}")]
    ChecksumMismatch(PathBuf),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint/config mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("non-finite gradient in parameter group {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss {value} at batch {batch}")]
    NonFiniteLoss { batch: usize, value: f64 },
    #[error("no batches")]
    NoBatches,
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
