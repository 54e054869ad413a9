use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("degenerate vector in cosine similarity (norm {norm:e} < 1e-12)")]
    DegenerateVector { norm: f64 },

    #[error("non-finite value at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid graph: {0}")]
    Validation(String),

    #[error("graph is not heterogeneous: |A| + |R| = {0} (must exceed 2)")]
    Heterogeneity(usize),

    #[error("node index {index} out of range for {len} nodes")]
    Index { index: usize, len: usize },

    #[error("readout over an empty node set")]
    EmptyReadout,

    #[error("no negative candidates: every node is adjacent to every other")]
    NoNegative,

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("class {0} has no support nodes")]
    MissingClass(usize),

    #[error("block count {blocks} does not divide hidden dimension {dim}")]
    Partition { blocks: usize, dim: usize },

    #[error("cannot build task: class {class} has {available} labeled nodes, {required} required")]
    TaskConstruction {
        class: String,
        available: usize,
        required: usize,
    },

    #[error("invalid generator spec: {0}")]
    Spec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{phase} phase failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_phase(self, phase: &'static str) -> Self {
        match self {
            already @ Error::Phase { .. } => already,
            other => Error::Phase {
                phase,
                source: Box::new(other),
            },
        }
    }

    /// Process exit code for the CLI: 2 validation, 3 training, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Phase { source, .. } => source.exit_code(),
            Error::Training { .. } | Error::NonFinite { .. } | Error::DegenerateVector { .. } => 3,
            Error::Io { .. } => 4,
            _ => 2,
        }
    }
}
