use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("class {0} has no training samples")]
    MissingClass(usize),

    #[error("stale tape: recorded at parameter generation {tape}, parameters are at {params}")]
    StaleTape { tape: u64, params: u64 },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("label {label} outside [0, {classes}) in {split} split")]
    LabelRange {
        label: usize,
        classes: usize,
        split: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// `3` for data problems (unreadable or malformed files, labels, values),
    /// `4` for shape and configuration problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::LabelRange { .. }
            | Error::EmptyDataset(_)
            | Error::InvalidInput(_)
            | Error::ModelFormat(_)
            | Error::Io { .. } => 3,
            Error::InvalidDimension(_)
            | Error::DimensionMismatch { .. }
            | Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::MissingClass(_)
            | Error::StaleTape { .. }
            | Error::Shape(_) => 4,
        }
    }
}
