use std::path::PathBuf;

use albench_model::ModelError;
use thiserror::Error;

pub type Result<T, E = RunError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] albench_core::Error),

    #[error("training failed: {0}")]
    Training(#[from] ModelError),

    #[error("run directory {} is locked by another process (delete {} if it is stale)", .dir.display(), .dir.join(crate::layout::LOCK_FILE).display())]
    Locked { dir: PathBuf },

    #[error("replay source {}: {reason}", .source_dir.display())]
    Replay { source_dir: PathBuf, reason: String },

    #[error("cannot resume {}: {reason}", .dir.display())]
    Resume { dir: PathBuf, reason: String },

    #[error("report error: {0}")]
    Report(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Process exit codes of the `al` binary.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const TRAINING: i32 = 3;
}

impl RunError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        RunError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use albench_core::Error as E;
        match self {
            RunError::Config(_) => exit::CONFIG,
            RunError::Core(E::InvalidConfig(_) | E::Dataset(_)) => exit::CONFIG,
            RunError::Training(_) => exit::TRAINING,
            _ => exit::FAILURE,
        }
    }
}
