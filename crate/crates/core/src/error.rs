use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coordinate vector {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("distance matrix is not a metric: {0}")]
    NotAMetric(String),

    #[error("row {row} is not a probability vector: {reason}")]
    NotStochastic { row: usize, reason: String },

    #[error("space has {size} points; brute-force enumeration is capped at {cap}")]
    SpaceTooLarge { size: usize, cap: usize },

    #[error("chain is not ergodic: {0}")]
    NonErgodic(String),

    #[error("variation threshold not reached within {t_max} steps (last max-pair TV {last})")]
    HorizonExceeded {
        t_max: usize,
        last: f64,
        profile: Vec<f64>,
    },

    #[error("ball sampler exceeded {0} void restarts")]
    RestartLimit(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
