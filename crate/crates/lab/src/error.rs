use std::path::PathBuf;

use meanfield_core::Error as CoreError;

/// Failures grouped by the process exit code they map to.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl LabError {
    pub fn config(msg: impl Into<String>) -> Self {
        LabError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }

    /// 2 for configuration problems, 3 for I/O, 4 for divergence and other
    /// numerical breakdowns.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Io { .. } => 3,
            LabError::Numerical(_) => 4,
        }
    }
}

impl From<CoreError> for LabError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Diverged { .. } | CoreError::LinearAlgebra(_) => LabError::Numerical(e.to_string()),
            _ => LabError::Config(e.to_string()),
        }
    }
}

pub type LabResult<T> = Result<T, LabError>;
