use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures of the std-side pipeline, grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum AppError {
    /// Bad configuration, arguments or on-disk metadata.
    #[error("invalid {what}: {message}")]
    Validation { what: String, message: String },
    /// Divergent training or sampling.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] urcdm_core::Error),
}

pub type AppResult<T> = std::result::Result<T, AppError>;

impl AppError {
    pub fn validation(what: impl Into<String>, message: impl Into<String>) -> Self {
        AppError::Validation {
            what: what.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// 2 validation, 3 numeric abort, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        use urcdm_core::Error as E;
        match self {
            AppError::Validation { .. } => 2,
            AppError::Numeric(_) => 3,
            AppError::Io { .. } => 4,
            AppError::Core(e) => match e {
                E::Numeric(_) | E::Tile { .. } => 3,
                _ => 2,
            },
        }
    }
}

/// Attaches the path to an `io::Result`.
pub trait IoContext<T> {
    fn at(self, path: impl AsRef<Path>) -> AppResult<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl AsRef<Path>) -> AppResult<T> {
        self.map_err(|e| AppError::io(path, e))
    }
}
