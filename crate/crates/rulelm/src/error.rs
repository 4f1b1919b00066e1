use std::path::PathBuf;

use rulelm_core::cloze::ScorerError;

/// Pipeline failure, mapped onto process exit codes by [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] rulelm_core::Error),
    #[error("scorer batch {batch} failed after {attempts} attempt(s): {source}")]
    Scorer {
        batch: usize,
        attempts: u32,
        #[source]
        source: ScorerError,
    },
    #[error("internal: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, message: message.into() }
    }

    /// 2 for config or input problems, 3 for scorer failures, 4 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::Config(_) => 2,
            Error::Core(rulelm_core::Error::NoDefinedPrecision) => 4,
            Error::Core(_) => 2,
            Error::Scorer { .. } => 3,
            Error::Internal(_) => 4,
        }
    }
}
