use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("source depth must be positive at valid pixels, found {value} at ({row}, {col})")]
    NonPositiveSource { row: usize, col: usize, value: f64 },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("kappa must be positive and finite, got {0}")]
    InvalidKappa(f64),

    #[error("lambda must lie in (0, 0.25), got {0}")]
    InvalidLambda(f64),

    #[error("scale factor must be a positive integer, got {0}")]
    InvalidScale(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("block ({row}, {col}) of the diffused target has mean {mean:e}, ratio undefined")]
    ZeroBlockMean { row: usize, col: usize, mean: f64 },

    #[error("source has no valid pixels")]
    EmptySource,

    #[error("no jointly valid pixels to evaluate")]
    NoValidPixels,

    #[error("no convergence after {iterations} iterations (last update {last_update:e})")]
    NoConvergence { iterations: usize, last_update: f64 },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("value {value} at ({row}, {col}) cannot be stored as {format}")]
    OutOfRange {
        row: usize,
        col: usize,
        value: f64,
        format: &'static str,
    },

    #[error("i/o failure on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
