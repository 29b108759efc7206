//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CknError>;

#[derive(Debug, Error)]
pub enum CknError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A patch shape that does not fit inside the map it is applied to.
    #[error("empty result: {0}")]
    EmptyResult(String),

    /// No patches available to sample from.
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    /// Data that cannot support the requested statistic (e.g. all pairwise
    /// distances are zero).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Optimizer started from a point with a non-finite objective.
    #[error("invalid start: {0}")]
    InvalidStart(String),

    /// A class has too few members for the requested stratified split.
    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },

    #[error("version mismatch: {0}")]
    VersionMismatch(String),

    #[error("truncated input while reading {what}: expected {expected} bytes, found {found}")]
    Truncated {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("count mismatch: {0}")]
    CountMismatch(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CknError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CknError::InvalidArgument(msg.into())
    }
}
