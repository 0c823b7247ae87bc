use std::io;

use thiserror::Error;

use crate::graph::RelationKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown relation token `{0}`")]
    UnknownRelation(String),

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("relation {relation} has {count} edges; at least 3 are needed for a three-way split")]
    TooFewEdges { relation: RelationKind, count: usize },

    #[error("no valid corruption for edge {source_name} -> {target_name} after {attempts} attempts")]
    ResamplingExhausted {
        source_name: String,
        target_name: String,
        attempts: usize,
    },

    #[error("loss became non-finite during epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
