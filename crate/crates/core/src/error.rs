//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: unsupported format version {found} (expected {expected})")]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("mesh is empty")]
    EmptyMesh,

    #[error("mesh has zero extent along an axis")]
    ZeroExtent,

    #[error("mesh has zero total surface area")]
    ZeroArea,

    #[error("voxel grid has no inside cells")]
    NoInsideCells,

    #[error("size mismatch: {0}")]
    Mismatch(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("ray casting retry budget exhausted after {attempts} attempts")]
    RetryBudget { attempts: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
