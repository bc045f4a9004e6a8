use std::path::Path;

use serde_json::json;

/// Failure reported to the user as a JSON object on stderr.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::new("io", format!("{}: {err}", path.display()))
    }

    pub fn parse(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::new("parse", format!("{}: {err}", path.display()))
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind, "message": self.message } }).to_string()
    }
}

impl From<qbgraph::Error> for CliError {
    fn from(e: qbgraph::Error) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
