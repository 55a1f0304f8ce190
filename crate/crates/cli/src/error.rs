use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::DatasetError;

/// Process exit codes of the `fdem` binary. Usage errors exit with 2
/// (reported by the argument parser).
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 3;
    /// Results were written but some column failed or did not converge.
    pub const INCOMPLETE: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Dataset {
        path: PathBuf,
        #[source]
        source: DatasetError,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] fdem_core::Error),

    #[error("{}: {message}", path.display())]
    Result { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => exit::IO,
            CliError::Dataset { .. } | CliError::Config(_) | CliError::Result { .. } => exit::INPUT,
            CliError::Core(fdem_core::Error::Invalid { .. }) => exit::INPUT,
            CliError::Core(_) => exit::INCOMPLETE,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
