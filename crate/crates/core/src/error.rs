use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid has {points} points, exceeding the memory cap of {cap}")]
    MemoryCap { points: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("packet tail density {density:e} at the grid boundary exceeds {limit:e}")]
    TailTruncation { density: f64, limit: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("rejection sampler acceptance rate {rate:e} is below {limit:e}")]
    Acceptance { rate: f64, limit: f64 },

    #[error("expected {expected} branch components, found {found}")]
    BranchCount { expected: usize, found: usize },

    #[error("sub-ensemble for outcome {0} is empty")]
    EmptySubEnsemble(u8),

    #[error("boundary density {density:e} exceeds {limit:e} at t = {time}")]
    BoundaryViolation { density: f64, limit: f64, time: f64 },

    #[error("scenario misconfigured: {0}")]
    Scenario(String),

    #[error("malformed field container: {0}")]
    Container(String),

    #[error("malformed record: {0}")]
    Record(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
