use std::path::{Path, PathBuf};

use mstwin_core::ingest::ParseError;
use mstwin_service::ServiceError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Service(#[from] ServiceError),
    /// Bad flag combination detected after argument parsing.
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path) -> impl FnOnce(ParseError) -> Self + '_ {
        move |source| CliError::Parse {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn domain(e: impl std::fmt::Display) -> Self {
        CliError::Domain(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
