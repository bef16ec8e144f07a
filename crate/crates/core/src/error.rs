use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("duplicate parameter: dwell time {0} appears more than once")]
    DuplicateParameter(f64),

    #[error("dwell time {0} not present in dataset")]
    Lookup(f64),

    #[error("invalid split: {0}")]
    Split(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range 1..={len}")]
    Index { index: usize, len: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("ill-conditioned kernel matrix{}: {message}", mode.map(|m| format!(" (mode {m})")).unwrap_or_default())]
    Conditioning { mode: Option<usize>, message: String },

    #[error("training diverged at epoch {epoch} (lr = {lr:e})")]
    Divergence { epoch: usize, lr: f64 },

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("corrupt file {path}: {message}")]
    Corruption { path: PathBuf, message: String },

    #[error("invalid data in {path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn corruption(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Corruption {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Attach a POD mode index to a conditioning failure.
    pub(crate) fn with_mode(self, mode: usize) -> Self {
        match self {
            Error::Conditioning { message, .. } => Error::Conditioning { mode: Some(mode), message },
            Error::SingularMatrix(message) => Error::Conditioning { mode: Some(mode), message },
            other => other,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 2 for configuration problems, 3 for I/O and file-format problems,
    /// 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::DuplicateParameter(_)
            | Error::Lookup(_)
            | Error::Split(_)
            | Error::Shape(_)
            | Error::Index { .. }
            | Error::EmptyInput(_) => 2,
            Error::Format { .. } | Error::Corruption { .. } | Error::Data { .. } | Error::Io { .. } => 3,
            Error::Degenerate(_)
            | Error::SingularMatrix(_)
            | Error::Conditioning { .. }
            | Error::Divergence { .. }
            | Error::DegenerateMetric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
