use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Exit status for bad input of any kind: config, files, mismatches,
/// failed verification.
pub const EXIT_VALIDATION: u8 = 1;
/// Exit status for failures while running a valid request.
pub const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("config: `{0}` is required for this command")]
    MissingField(&'static str),

    #[error("cannot read {field} file {}: {source}", path.display())]
    Input { field: &'static str, path: PathBuf, source: io::Error },

    #[error("invalid {field} file {}: {source}", path.display())]
    Parse { field: &'static str, path: PathBuf, source: Box<dyn std::error::Error + Send + Sync> },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Core(#[from] vcrg_core::Error),

    #[error(transparent)]
    Model(#[from] vcrg_model::Error),

    #[error("thread pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use vcrg_model::Error as M;
        match self {
            Self::Config(_)
            | Self::MissingField(_)
            | Self::Input { .. }
            | Self::Parse { .. }
            | Self::Mismatch(_)
            | Self::Verification(_) => EXIT_VALIDATION,
            Self::Core(vcrg_core::Error::InvalidParameter(_)) => EXIT_VALIDATION,
            Self::Model(M::Config(_) | M::Label { .. } | M::EmptyTrainSplit | M::Shape(_)) => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        }
    }
}
