use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}: dataset is empty")]
    EmptyDataset(PathBuf),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("matrix of order {n} exceeds the exact eigendecomposition cap {cap}; use chebyshev wavelet mode")]
    OverCap { n: usize, cap: usize },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for this failure class: 2 usage/config, 3 data or
    /// checkpoint, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::OverCap { .. } => 2,
            Error::Parse { .. }
            | Error::EmptyDataset(_)
            | Error::Shape(_)
            | Error::Data(_)
            | Error::Checkpoint(_)
            | Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
        }
    }
}
