use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the unit cube")]
    OutOfDomain { point: Vec<f64> },
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("measures are defined on different supports")]
    SupportMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid noise table: {0}")]
    InvalidNoise(String),
    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error("exact solver supports at most {cap} vertices per side, got {got}")]
    SizeCapExceeded { cap: usize, got: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("{source_name}, row {row}: {msg}")]
    Parse {
        source_name: String,
        row: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
