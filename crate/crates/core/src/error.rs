use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("layer state: {0}")]
    State(String),
    #[error("step {t} outside [1, {steps}]")]
    Range { t: usize, steps: usize },
    #[error("numeric conditioning: {0}")]
    Conditioning(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("scheduling: {0}")]
    Scheduling(String),
    #[error("tile ({i}, {j}): {message}")]
    Tile { i: usize, j: usize, message: String },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("undersized set: need at least {needed} points, got {got}")]
    UndersizedSet { needed: usize, got: usize },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("setup: {0}")]
    Setup(String),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
