use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Error, Debug)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("event at line {line} out of bounds: ({x}, {y}) not inside {width}x{height}")]
    OutOfBounds {
        line: usize,
        x: i64,
        y: i64,
        width: u32,
        height: u32,
    },

    #[error("event set is empty")]
    EmptyEventSet,

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("velocity norm is below the degeneracy threshold")]
    ZeroVelocity,

    #[error("evaluation mask is empty")]
    EmptyMask,

    #[error("degenerate contrast: the identity-warp image carries no gradient energy")]
    DegenerateContrast,

    #[error("non-finite objective in term `{term}`")]
    NonFinite { term: &'static str },

    #[error("degenerate point-cloud geometry: {0}")]
    DegenerateGeometry(String),

    #[error("timestamps are not monotone at index {index}")]
    NonMonotoneTimestamps { index: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
