use std::path::PathBuf;

/// Errors produced by the segmentation toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} out of range: {value} not in {range}")]
    Range {
        what: &'static str,
        value: i64,
        range: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("solver diverged after {iterations} iterations: {detail}")]
    Diverged { iterations: usize, detail: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize, trace: Vec<f64> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn range(what: &'static str, value: usize, range: impl Into<String>) -> Self {
        Error::Range {
            what,
            value: value as i64,
            range: range.into(),
        }
    }
}
