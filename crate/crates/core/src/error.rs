use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("residual shortcut {encode} <-> {decode}: shape mismatch {left:?} vs {right:?}")]
    ResidualShape {
        encode: String,
        decode: String,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("batch normalization needs at least 2 rows in train mode, got {0}")]
    BatchTooSmall(usize),

    #[error("{0}: backward called without a cached train-mode forward pass")]
    MissingCache(&'static str),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    /// Internal inconsistency while wiring the network; never caused by user input.
    #[error("network builder bug: {0}")]
    Builder(String),

    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("non-finite validation loss {loss} after epoch {epoch}")]
    NonFiniteValidation { epoch: usize, loss: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape { op, left, right }
    }
}
