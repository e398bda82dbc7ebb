use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Core(#[from] stldp_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}: output directory is locked by another run")]
    Locked(PathBuf),
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, RunError>;

impl RunError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        RunError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config { .. } => "invalid_config",
            RunError::Core(e) => match e {
                stldp_core::Error::InvalidParameter { .. } | stldp_core::Error::DimensionMismatch { .. } => {
                    "model_rejected"
                }
                _ => "runtime_failure",
            },
            RunError::Io { .. } | RunError::Json(_) | RunError::Csv(_) => "io",
            RunError::Locked(_) => "locked",
            RunError::Manifest { .. } => "manifest",
            RunError::Format(_) => "format",
        }
    }

    /// Machine-readable form written on failure.
    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            error: self.kind().to_string(),
            message: self.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub error: String,
    pub message: String,
}
