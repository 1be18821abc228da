use std::path::Path;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}:{line}: {msg}")]
    Data { path: String, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("config {label:?}: {source}")]
    Training { label: String, source: hybridrec::Error },

    #[error(transparent)]
    Core(#[from] hybridrec::Error),
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io { path: path.display().to_string(), source }
    }

    /// 1 usage, 2 data, 3 training divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Usage(_) => 1,
            BenchError::Data { .. } | BenchError::Io { .. } => 2,
            BenchError::Training { source: hybridrec::Error::Diverged { .. }, .. } => 3,
            BenchError::Training { .. } | BenchError::Core(_) => 2,
        }
    }
}
