use std::path::PathBuf;

use thiserror::Error;

use crate::ingest::IngestError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: invalid config at {pointer}: {message}")]
    Config { path: PathBuf, pointer: String, message: String },
    #[error("config is missing `{0}`, which the {1} workflow needs")]
    Missing(&'static str, &'static str),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{context}: {source}")]
    Core { context: String, source: sdsvar::SvarError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Attach workflow context to a core error.
pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T>;
}

impl<T> Context<T> for sdsvar::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T> {
        self.map_err(|source| CliError::Core { context: what.into(), source })
    }
}
