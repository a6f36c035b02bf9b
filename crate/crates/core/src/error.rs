use thiserror::Error;

/// Errors raised by the modeling pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("observability matrix has rank {rank}, state dimension is {n}")]
    Observability { rank: usize, n: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 for feasibility failures on well-formed input,
    /// 2 for anything wrong with the input itself.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Observability { .. } | Error::Degenerate(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
