use std::path::Path;

use hhstdp_core::Error as CoreError;
use thiserror::Error;

/// Failure of a command, classified by exit status:
///
/// | status | meaning                                   |
/// |--------|-------------------------------------------|
/// | 0      | success, every requested artifact written |
/// | 1      | the simulation or a sweep run failed      |
/// | 2      | invalid configuration or usage            |
/// | 3      | I/O failure or unreadable dataset         |
/// | 4      | unreadable or incompatible snapshot       |
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Data(String),

    #[error("{path}: {message}")]
    Snapshot { path: String, message: String },

    #[error("run failed: {0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Run(_) => 1,
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Snapshot { .. } => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::Data(format!("{}: {err}", path.display()))
    }

    /// Errors raised while loading a dataset file.
    pub fn data(path: &Path, err: CoreError) -> Self {
        Self::Data(format!("{}: {err}", path.display()))
    }

    pub fn snapshot(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Snapshot {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// Errors raised by a simulation in progress.
    pub fn run(err: CoreError) -> Self {
        Self::Run(err.to_string())
    }
}
