use std::path::Path;

use thiserror::Error;

/// Failures surfaced by the commands, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or missing inputs: exit 2.
    #[error("{0}")]
    Config(String),
    /// Inputs were fine but the work failed: exit 3.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("cannot parse {}: {e}", path.display())))
}
