use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("index {index} out of range for {len} rows")]
    Index { index: usize, len: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("coordinate {coord:?} is not present in the hash table")]
    UnknownCoordinate { coord: Vec<f64> },

    #[error("training diverged at iteration {iteration} (loss = {loss})")]
    Diverged { iteration: usize, loss: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("task {task}: {source}")]
    Task {
        task: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("case {case}, model {model}, strategy {strategy}: {source}")]
    Run {
        case: u64,
        model: String,
        strategy: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn with_path(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping provenance wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::File { source, .. } | Error::Task { source, .. } | Error::Run { source, .. } => {
                source.root()
            }
            other => other,
        }
    }

    pub fn is_diverged(&self) -> bool {
        matches!(self.root(), Error::Diverged { .. })
    }
}
