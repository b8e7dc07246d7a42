use std::path::PathBuf;

use thiserror::Error;

/// Every fallible operation in the crate reports through this type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("loss node must be scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("non-finite gradient for parameter {param_index}")]
    NonFiniteGradient { param_index: usize },

    #[error("training diverged at iteration {iteration}: objective is {value}")]
    Divergence { iteration: usize, value: f64 },

    #[error("input {y_index} has zero marginal probability")]
    ZeroMarginal { y_index: usize },

    #[error("singular system (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("empty search grid")]
    EmptyGrid,

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("idx file {path}: bad magic number {magic:#010x}")]
    IdxBadMagic { path: PathBuf, magic: u32 },

    #[error("idx file {path}: payload truncated (expected {expected} bytes, found {found})")]
    IdxTruncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("idx file {path}: dimension product overflows")]
    IdxDimOverflow { path: PathBuf },

    #[error("tensor file: {0}")]
    TensorFile(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("record line {line}: {message}")]
    RecordParse { line: usize, message: String },

    #[error("unsupported record schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("{path}: {source}")]
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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
