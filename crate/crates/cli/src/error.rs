use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {msg}")]
    Config { path: String, line: usize, msg: String },

    #[error("{path}: missing required keys: {}", keys.join(", "))]
    Missing { path: String, keys: Vec<String> },

    #[error(transparent)]
    Core(#[from] cpl_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("nothing to aggregate in {}", .0.display())]
    NothingToAggregate(PathBuf),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
