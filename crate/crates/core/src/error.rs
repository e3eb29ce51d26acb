use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("partition has no groups")]
    EmptyPartition,
    #[error("group {0} has zero size")]
    EmptyGroup(usize),
    #[error("weight for group {group} must be positive, got {value}")]
    NonPositiveWeight { group: usize, value: f64 },
    #[error("expected {expected} explicit weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("group sizes cover {got} features, design has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("row counts sum to {got}, design has {expected} rows")]
    RowCountMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("power iteration did not converge after {iterations} iterations (best estimate {estimate})")]
    PowerIteration { iterations: usize, estimate: f64 },
    #[error("group {0} has an all-zero column block")]
    ZeroGroup(usize),
    #[error("lipschitz constants have not been attached to the partition")]
    MissingLipschitz,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
