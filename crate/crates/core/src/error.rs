use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum CrabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} outside pulse domain [0, {total_time}]")]
    OutOfRange { t: f64, total_time: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CrabError>;

impl From<toml::de::Error> for CrabError {
    fn from(e: toml::de::Error) -> Self {
        CrabError::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for CrabError {
    fn from(e: serde_json::Error) -> Self {
        CrabError::Parse(e.to_string())
    }
}
