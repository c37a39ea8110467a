use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Engine(#[from] tsens::Error),
}

impl CliError {
    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> CliError {
        CliError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for usage, 2 for unreadable or inconsistent input, 3 when the computation itself fails.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Engine(tsens::Error::Config(_)) => 1,
            CliError::Engine(e) if e.is_computational() => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            1 => "usage",
            3 => "computation",
            _ => "data",
        }
    }
}
