//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("payload length mismatch: expected {expected} values, got {got}")]
    PayloadMismatch { expected: usize, got: usize },

    #[error("temperature {value} K out of range [150, 350] at cell ({x}, {y}), hour {hour}")]
    TemperatureOutOfRange {
        value: f64,
        x: usize,
        y: usize,
        hour: usize,
    },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("degenerate dataset: standard deviation is zero")]
    DegenerateDataset,

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("backward already called on this graph")]
    BackwardTwice,

    #[error("tensor is not part of this graph or not tracked")]
    NotTracked,

    #[error("generator output is detached from generator parameters")]
    DetachedBatch,

    #[error("{0}")]
    Data(String),

    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for a data-level error with a formatted message.
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
