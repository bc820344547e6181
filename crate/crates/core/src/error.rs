use std::path::PathBuf;

/// Errors produced anywhere in the forecasting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("undefined metric: {0}")]
    Undefined(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal of length {len} too short: {what} needs at least {min}")]
    SignalTooShort {
        what: &'static str,
        len: usize,
        min: usize,
    },

    #[error("{requested} decomposition levels requested, at most {max} feasible for length {len}")]
    TooManyLevels {
        requested: usize,
        max: usize,
        len: usize,
    },

    #[error("stale cache: {0}")]
    StaleCache(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("missing column `{column}` in {path}")]
    MissingColumn { path: PathBuf, column: String },

    #[error("config: {0}")]
    Config(String),

    #[error("unsupported container format: {0}")]
    Version(String),

    #[error("container checksum mismatch")]
    Checksum,

    #[error("container truncated: {0}")]
    Truncated(&'static str),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(what: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape {
        what,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
