use std::path::PathBuf;

use thiserror::Error;

use crate::cohort::LabParameter;

pub type Result<T, E = GlpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GlpError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate interval: t_i == t_k == {0}")]
    DegenerateInterval(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value for patient {patient}, parameter {parameter}, month {month}")]
    Encoding {
        patient: String,
        parameter: LabParameter,
        month: i64,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("training error: {0}")]
    Training(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("parameter mismatch: expected {expected}, found {found}")]
    ParameterMismatch {
        expected: LabParameter,
        found: LabParameter,
    },

    #[error("weight file: {0}")]
    WeightFile(#[from] WeightFileError),

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Reasons a weight file fails to load.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightFileError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("unknown parameter id {0}")]
    UnknownParameter(u8),
    #[error("certain value {0} outside 0..=5")]
    BadCertain(u8),
    #[error("file is {got} bytes, expected {expected}")]
    Size { expected: usize, got: usize },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("non-finite weight at index {0}")]
    NonFinite(usize),
}
