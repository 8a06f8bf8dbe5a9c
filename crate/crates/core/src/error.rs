use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,

    #[error("feature vector must have at least one element")]
    EmptyVector,

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed episode: {0}")]
    MalformedEpisode(String),

    #[error("malformed distances: {0}")]
    MalformedDistances(String),

    #[error("poisoning budget {budget} exceeds the limit {limit}")]
    BudgetTooLarge { budget: usize, limit: usize },

    #[error("neighbour count k = {k} outside 1..={max}")]
    NeighborCount { k: usize, max: usize },

    #[error("instance too large for exhaustive search: {0}")]
    OracleLimit(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no records to aggregate")]
    EmptyRecords,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), message: err.to_string() }
    }
}
