use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read image {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },

    #[error("unsupported image format: {path}")]
    UnsupportedFormat { path: PathBuf },

    #[error("dataset at {root} contains no class with at least one image")]
    EmptyDataset { root: PathBuf },

    #[error("patch size {patch} exceeds image side {side}")]
    PatchLargerThanImage { patch: usize, side: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("PyramidTooDeep: patch size r={patch} gives a {grid}x{grid} patch grid, finer than the deepest pyramid level c_L={cells}")]
    PyramidTooDeep { patch: usize, cells: usize, grid: usize },

    #[error("inconsistent configuration: {0}")]
    InconsistentConfig(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("eigendecomposition did not converge")]
    DidNotConverge,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("too few samples: need at least {needed}, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigInvalid(_)
            | Error::InconsistentConfig(_)
            | Error::PyramidTooDeep { .. }
            | Error::PatchLargerThanImage { .. } => 1,
            Error::NotSymmetric(_)
            | Error::DidNotConverge
            | Error::NotPositiveDefinite
            | Error::DegenerateData(_) => 3,
            _ => 2,
        }
    }
}
