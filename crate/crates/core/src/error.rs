use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid base {ch:?} at line {line}, column {column}")]
    InvalidBase { line: usize, column: usize, ch: char },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("cluster has no reads")]
    EmptyCluster,

    #[error("reads encoded to inconsistent lengths ({expected} vs {found})")]
    InconsistentLength { expected: usize, found: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },

    #[error("contaminant kind {0} needs a non-empty foreign reference pool")]
    EmptyForeignPool(&'static str),

    #[error("need at least 2 clusters to split, got {0}")]
    TooFewClusters(usize),

    #[error("list lengths differ: {0} predictions vs {1} references")]
    LengthMismatch(usize, usize),

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("backward called before a forward pass recorded a loss")]
    BackwardBeforeForward,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint config mismatch on `{key}`: checkpoint has {found}, run config has {expected}")]
    ConfigMismatch { key: String, expected: String, found: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
