use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("comparison graph is disconnected ({components} components); restrict to the largest component first")]
    Disconnected { components: usize },

    #[error("solver failure: {message} (step size {step_size:e})")]
    Solver { message: String, step_size: f64 },

    #[error("refit failure: {0}")]
    Refit(String),

    #[error("inference failure: {0}")]
    Inference(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("config errors:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code for the command-line front-end: 1 for validation
    /// problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Solver { .. } | Error::Refit(_) | Error::Inference(_) => 2,
            _ => 1,
        }
    }
}
