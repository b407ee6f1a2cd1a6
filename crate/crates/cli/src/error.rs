//! CLI error type and exit-code mapping.

use std::path::PathBuf;

use spinn::error::{ConfigError, PdeError, TrainError};
use thiserror::Error;

use crate::checkpoint::CheckpointError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    ConfigFile {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },
    #[error("run directory {0} is locked by another run (remove .lock if stale)")]
    Locked(PathBuf),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("training aborted: {0}")]
    Aborted(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for invalid invocations or configurations, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::ConfigFile { .. } | CliError::Config(_) | CliError::Pde(_) => 2,
            CliError::Train(TrainError::Config(_)) => 2,
            _ => 1,
        }
    }
}
