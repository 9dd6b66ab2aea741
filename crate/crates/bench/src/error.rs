use std::path::PathBuf;

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{events} events x {floats_per_event} floats x 4 bytes != {total_bytes} bytes")]
    Constraint {
        events: u64,
        floats_per_event: u32,
        total_bytes: u64,
    },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("{method} cannot read {path}: {reason}")]
    Unsupported {
        method: &'static str,
        path: PathBuf,
        reason: String,
    },
    #[error("no results to write")]
    EmptyResults,
    #[error(transparent)]
    Store(#[from] bkio::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
