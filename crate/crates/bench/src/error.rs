use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_DATA: u8 = 65;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed data: {0}")]
    Data(String),
    #[error(transparent)]
    Solver(#[from] risro_core::Error),
}

impl BenchError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            BenchError::Usage(_) => EXIT_USAGE,
            BenchError::Io { .. } => EXIT_IO,
            BenchError::Data(_) => EXIT_DATA,
            BenchError::Solver(risro_core::Error::InvalidInput(_)) => EXIT_USAGE,
            BenchError::Solver(_) => EXIT_DATA,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
