use std::sync::Arc;

use crate::types::Codec;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the bkio library.
///
/// `Error` is `Clone` so that a single decompression failure observed by a
/// worker thread can be handed to every consumer waiting on that basket.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(Arc<std::io::Error>),

    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("bad magic at file head")]
    BadMagic,

    #[error("bad trailer: {0}")]
    BadTrailer(String),

    #[error("truncated: {0}")]
    Truncated(String),

    #[error("inconsistent index: {0}")]
    Inconsistent(String),

    #[error("invalid compression spec: {0}")]
    InvalidSpec(String),

    #[error("{codec} codec failure: {message}")]
    CodecFailure { codec: Codec, message: String },

    #[error("corrupt {codec} frame: {message}")]
    CorruptFrame { codec: Codec, message: String },

    #[error("size mismatch: expected {expected} bytes, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("invalid writer config: {0}")]
    InvalidConfig(String),

    #[error("branch '{branch}': {message}")]
    ValueMismatch { branch: String, message: String },

    #[error("writer already closed")]
    WriterClosed,

    #[error("entry {entry} out of range (total entries {total})")]
    EntryOutOfRange { entry: u64, total: u64 },

    #[error("entry range {start}..{end} out of bounds (total entries {total})")]
    RangeOutOfBounds { start: u64, end: u64, total: u64 },

    #[error("basket {index} out of range for branch {branch_id} ({count} baskets)")]
    BasketOutOfRange {
        branch_id: u32,
        index: usize,
        count: usize,
    },

    #[error("cluster {cluster} out of range ({count} clusters)")]
    ClusterOutOfRange { cluster: usize, count: usize },

    #[error("unknown branch {0}")]
    UnknownBranch(String),

    #[error("unsupported shape for branch '{branch}': {message}")]
    UnsupportedShape { branch: String, message: String },

    #[error("length {len} is not a multiple of element width {width}")]
    Misaligned { len: usize, width: usize },

    #[error("stale view: basket ({branch_id}, {first_entry}) was evicted")]
    StaleView { branch_id: u32, first_entry: u64 },

    #[error("slice holds {held} data, requested {requested}")]
    ModeMismatch {
        held: &'static str,
        requested: &'static str,
    },

    #[error("unzip pool is shut down")]
    PoolShutdown,
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(Arc::new(err))
    }
}
