use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl HarnessError {
    pub fn config(line: usize, message: impl Into<String>) -> Self {
        HarnessError::Config {
            line,
            message: message.into(),
        }
    }

    pub fn numerical(e: impl std::fmt::Display) -> Self {
        HarnessError::Numerical(e.to_string())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// `1` usage or input, `2` numerical or output failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::Config { .. } | HarnessError::Input { .. } => 1,
            HarnessError::Io { .. } | HarnessError::Numerical(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
