//! Failure classes and their process exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad command line.
    #[error("{0}")]
    Usage(String),

    /// Config or inputs rejected before any work started.
    #[error("{0}")]
    Validation(String),

    /// A pipeline stage failed.
    #[error("stage `{stage}` failed: {source}")]
    Runtime {
        stage: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime { .. } => 3,
        }
    }

    pub fn stage(&self) -> Option<&str> {
        match self {
            CliError::Runtime { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
