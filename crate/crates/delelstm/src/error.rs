use std::path::PathBuf;

use delelstm_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed input at a 1-based line.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("column '{0}' not found")]
    MissingColumn(String),
    #[error("{}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },
    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Process exit status for each failure class.
pub mod exit {
    pub const CONFIG: i32 = 1;
    pub const DATA: i32 = 2;
    pub const DIVERGED: i32 = 3;
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => exit::CONFIG,
            Error::Io { .. } | Error::Parse { .. } | Error::MissingColumn(_) | Error::Checkpoint { .. } => exit::DATA,
            Error::Core(e) => match e {
                CoreError::NonFiniteLoss { .. } | CoreError::SolveFailure { .. } => exit::DIVERGED,
                CoreError::InvalidConfig(_) | CoreError::UnderdeterminedWithoutRidge { .. } => exit::CONFIG,
                _ => exit::DATA,
            },
        }
    }
}
