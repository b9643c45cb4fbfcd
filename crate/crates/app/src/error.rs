use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}, key `{key}`: {reason}")]
    Parse { line: usize, key: String, reason: String },

    /// `line` is 0 when the offending key or section is absent.
    #[error("key `{key}` (line {line}): {reason}")]
    Validation { key: String, line: usize, reason: String },
}

impl ConfigError {
    pub(crate) fn parse(line: usize, key: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Parse {
            line,
            key: key.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Core(#[from] anideg_core::Error),

    #[error("{0}")]
    Io(String),

    #[error("no diagnostics found in {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl AppError {
    /// Machine-readable class printed in front of the message.
    pub fn class(&self) -> &'static str {
        match self {
            AppError::Config(ConfigError::Parse { .. }) => "ParseError",
            AppError::Config(ConfigError::Validation { .. }) => "ValidationError",
            AppError::Core(e) => e.class(),
            AppError::Io(_) => "IoError",
            AppError::MissingArtifact(_) => "MissingArtifact",
            AppError::ChecksFailed { .. } => "ChecksFailed",
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

pub type AppResult<T> = std::result::Result<T, AppError>;
