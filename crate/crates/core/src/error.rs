use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FzooError>;

#[derive(Debug, Error)]
pub enum FzooError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss at {at}")]
    NonFiniteLoss { at: String },

    #[error("objective evaluation failed for direction {index}: {source}")]
    DirectionFailed {
        index: usize,
        #[source]
        source: Box<FzooError>,
    },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: u64,
        #[source]
        source: Box<FzooError>,
    },

    #[error("unsupported objective: {0}")]
    UnsupportedObjective(String),

    #[error("{path}: data row {row}{}: {message}", column.as_ref().map(|c| format!(", column '{c}'")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        row: usize,
        column: Option<String>,
        message: String,
    },

    #[error("config: {field}: {message}")]
    Config { field: String, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FzooError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FzooError::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        FzooError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
