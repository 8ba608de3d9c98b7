use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid band [{low_hz}, {high_hz}] Hz: {reason}")]
    InvalidBand { low_hz: f64, high_hz: f64, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("malformed event log: {0}")]
    MalformedLog(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("invalid episode pairing: source and frozen domain are both {0}")]
    InvalidPairing(usize),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{0}")]
    FailedCells(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
