use std::path::{Path, PathBuf};

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Numerical(#[from] jetedmd_core::Error),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Io { path: path.to_path_buf(), message: err.to_string() }
    }

    pub fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        Self::Parse { path: path.to_path_buf(), line, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Numerical(_) => 3,
            Self::Io { .. } | Self::Parse { .. } => 4,
        }
    }

    /// Machine-readable report printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let detail = match self {
            Self::Config { field, message } => json!({ "kind": "config", "field": field, "message": message }),
            Self::Numerical(e) => json!({ "kind": "numerical", "message": e.to_string() }),
            Self::Io { path, message } => json!({ "kind": "io", "path": path, "message": message }),
            Self::Parse { path, line, message } => {
                json!({ "kind": "parse", "path": path, "line": line, "message": message })
            }
        };
        json!({ "error": detail, "exit_code": self.exit_code() })
    }
}
