use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record in {file} at line {line}: {reason}")]
    MalformedRecord {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("episode {episode}: attribute {name:?} is not declared in the schema")]
    UnknownAttribute { episode: String, name: String },

    #[error("duplicate episode id {0:?}")]
    DuplicateEpisodeId(String),

    #[error("invalid split assignment: {0}")]
    InvalidSplit(String),

    #[error("category {0:?} has no entry in the mapping")]
    UnmappedCategory(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("requested {requested} labeled episodes but only {available} are in the training split")]
    SubsetTooLarge { requested: usize, available: usize },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("node {0} has no neighbors")]
    NoNeighbors(usize),

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("linear system is singular (regularization 0 with rank-deficient design)")]
    SingularSystem,

    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("only one class present in labels")]
    OneClassOnly,

    #[error("input is empty")]
    EmptyInput,

    #[error("rows are not aligned: {0}")]
    IdMisalignment(String),

    #[error("column provenance missing: {0}")]
    MissingProvenance(String),

    #[error("need at least two paired samples, found {0}")]
    TooFewPairs(usize),

    #[error("test labels were requested before final evaluation")]
    TestLabelAccess,

    #[error("invalid file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad inputs or configuration rather than by
    /// a failure while running. The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. }
                | Error::SingularSystem
                | Error::NoNeighbors(_)
                | Error::TestLabelAccess
                | Error::Csv(_)
        )
    }
}
