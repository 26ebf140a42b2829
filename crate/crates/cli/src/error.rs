use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cocsi_core::Error),

    #[error("no dataset at {0} (run gen-data first or pass --data)")]
    MissingDataset(PathBuf),

    #[error("no model checkpoint at {0} (run train first or pass --model)")]
    MissingModel(PathBuf),

    #[error("{0}")]
    Unsupported(String),

    #[error("{0}")]
    Mismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::MissingDataset(_) => "missing-dataset",
            CliError::MissingModel(_) => "missing-model",
            CliError::Unsupported(_) => "unsupported",
            CliError::Mismatch(_) => "mismatch",
            CliError::Io { .. } => "io",
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
