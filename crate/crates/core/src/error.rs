use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training failed: {0}")]
    TrainingFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("unavailable attack classes: {0:?}")]
    UnavailableClasses(Vec<String>),

    #[error("study data mismatch: {0}")]
    StudyMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
