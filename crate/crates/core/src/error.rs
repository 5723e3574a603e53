use thiserror::Error;

/// Errors raised by the numeric core and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box ({x_min}, {y_min}, {x_max}, {y_max}): {reason}")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        reason: &'static str,
    },

    #[error("overlap ratio undefined: {0}")]
    DegenerateArea(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("eigensolver failed to converge after {0} iterations")]
    NoConvergence(usize),

    #[error("recall level {level} unreachable (maximum recall {max_recall})")]
    RecallUnreachable { level: f64, max_recall: f64 },

    #[error("{record}: {message}")]
    Schema { record: String, message: String },

    #[error("scene generation failed: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
