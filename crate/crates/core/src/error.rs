use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix dimensions that do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A layer or run configuration that cannot be honored (even kernel, d % h != 0, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("index {index} out of range for {len} entries")]
    Index { index: usize, len: usize },

    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    /// Exhaustive search refused because it would need more reward evaluations than allowed.
    #[error("search needs {required} reward evaluations but the budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },

    #[error("transport error after {retries} retries: {message}")]
    Transport { retries: u32, message: String },

    #[error("unparseable backend response: {message}")]
    Format { message: String, raw_response: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
