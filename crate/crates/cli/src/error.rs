use std::path::PathBuf;

use glp::GlpError;
use thiserror::Error;

/// Process exit codes, one per failure category.
pub mod exit {
    pub const CONFIG: u8 = 2;
    pub const MISSING_ARTIFACT: u8 = 3;
    pub const DATA: u8 = 4;
    pub const WEIGHT_FILE: u8 = 5;
    pub const TRAINING: u8 = 6;
    pub const IO: u8 = 7;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0} of {1} weight files failed verification")]
    Verification(usize, usize),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] GlpError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(..) => exit::WEIGHT_FILE,
            CliError::Io { .. } => exit::IO,
            CliError::Core(e) => match e {
                GlpError::Config(_) => exit::CONFIG,
                GlpError::MissingArtifact(_) => exit::MISSING_ARTIFACT,
                GlpError::WeightFile(_) | GlpError::ParameterMismatch { .. } => exit::WEIGHT_FILE,
                GlpError::Training(_) | GlpError::Numeric(_) | GlpError::Undefined(_) => exit::TRAINING,
                GlpError::Io(_) => exit::IO,
                GlpError::DegenerateInterval(_)
                | GlpError::Precondition(_)
                | GlpError::Domain(_)
                | GlpError::Encoding { .. }
                | GlpError::Shape { .. }
                | GlpError::Csv { .. }
                | GlpError::Json(_) => exit::DATA,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
