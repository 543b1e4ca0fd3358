use std::path::PathBuf;

use fkc_core::FkcError;
use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// `path` is the dotted field path into the config.
    #[error("invalid config at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("simulation failed: {0}")]
    Simulation(FkcError),

    #[error("missing dump: {}", .0.display())]
    MissingDump(PathBuf),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] FkcError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        HarnessError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation { .. } => 2,
            HarnessError::Simulation(_) => 3,
            HarnessError::MissingDump(_) => 4,
            _ => 1,
        }
    }
}
