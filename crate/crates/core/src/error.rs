use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A NaN or infinity appeared. `step` is set when the failure happened
    /// inside a training loop.
    #[error("numeric failure in {op}{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Numeric { op: String, step: Option<usize> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("model dump: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn numeric(op: impl Into<String>) -> Self {
        Error::Numeric {
            op: op.into(),
            step: None,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
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

    /// Attach a training step index to a numeric failure.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::Numeric { op, .. } => Error::Numeric {
                op,
                step: Some(step),
            },
            other => other,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. })
    }
}
