use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("task {task_id}: invalid field `{field}`: {message}")]
    Invariant {
        task_id: String,
        field: &'static str,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),

    #[error("intercept calibration failed after {iterations} iterations (best rate {best_rate:.4}, target {target:.4})")]
    Calibration {
        iterations: usize,
        best_rate: f64,
        target: f64,
    },

    #[error("ensemble has no cover statistics")]
    MissingCover,

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invariant(task_id: &str, field: &'static str, message: impl Into<String>) -> Self {
        Error::Invariant {
            task_id: task_id.to_string(),
            field,
            message: message.into(),
        }
    }
}
