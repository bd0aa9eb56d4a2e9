use std::path::{Path, PathBuf};

/// Driver errors. `Display` renders a single `key=value` line so scripts can
/// parse failures from stderr.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("kind=config field={field} reason={reason:?}")]
    Config { field: String, reason: String },
    #[error("kind=dataset reason={0:?}")]
    Dataset(String),
    #[error("kind=io path={path:?} reason={reason:?}")]
    Io { path: PathBuf, reason: String },
    #[error("kind=solver reason={:?}", .0.to_string())]
    Core(#[from] inctpv::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    }

    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}
