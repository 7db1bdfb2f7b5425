use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error at byte offset {offset}: {detail}")]
    Format { offset: usize, detail: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },

    #[error("optimization error: {0}")]
    Optimization(String),

    #[error("degenerate gradient: l1 norm {norm:e} for {iterations} consecutive iterations")]
    DegenerateGradient { norm: f64, iterations: usize },

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("only {available} correctly classified images available, {requested} requested")]
    Shortfall { requested: usize, available: usize },

    #[error("model accuracy {accuracy:.4} is below the floor {floor:.4}")]
    AccuracyFloor { accuracy: f64, floor: f64 },

    #[error("report error: {0}")]
    Report(#[from] serde_json::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
