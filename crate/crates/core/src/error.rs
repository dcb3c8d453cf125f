//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors produced by kernel evaluation, batch construction, losses,
/// training, probing and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid label difference: value must be finite, got {0}")]
    InvalidLabelDifference(f64),

    #[error("batch too small for contrastive loss: need at least 2 samples, got {0}")]
    BatchTooSmall(usize),

    #[error("embedding not on hypersphere: row {row} has norm {norm}")]
    NotOnHypersphere { row: usize, norm: f64 },

    #[error("cannot project near-zero vector onto the sphere (row {row})")]
    ZeroNormRow { row: usize },

    #[error("no positive pairs in batch")]
    NoPositivePairs,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system: normal equations are not solvable; use a ridge penalty lambda > 0")]
    SingularSystem,

    #[error("site probe needs at least 2 distinct sites, got {0}")]
    SingleSite(usize),

    #[error("external split leaks training sites: {0}")]
    SplitLeakage(String),

    #[error("malformed row at line {line}: {msg}")]
    MalformedCsv { line: usize, msg: String },

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
