use std::path::Path;

use minilab_core::usage::PriceTable;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("backend {name}: {reason}")]
    Invalid { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub name: String,
    /// `https://…/v1` for real providers; `mock://echo` and `mock://template` are served in-process.
    pub base_url: Url,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: u32,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

fn default_temperature() -> f64 {
    0.7
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_concurrency() -> u32 {
    4
}

impl BackendConfig {
    pub fn new(name: impl Into<String>, base_url: &str, model: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            base_url: base_url.parse().expect("valid backend url"),
            model: model.into(),
            temperature: default_temperature(),
            timeout_ms: default_timeout_ms(),
            max_concurrency: default_concurrency(),
            api_key_env: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |reason: &str| ConfigError::Invalid { name: self.name.clone(), reason: reason.to_owned() };
        if self.name.trim().is_empty() {
            return Err(invalid("empty name"));
        }
        if self.max_concurrency < 1 {
            return Err(invalid("max_concurrency must be at least 1"));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(invalid("temperature must lie in [0, 2]"));
        }
        if self.timeout_ms == 0 {
            return Err(invalid("timeout must be positive"));
        }
        Ok(())
    }

    pub fn api_key(&self) -> Option<String> {
        self.api_key_env.as_deref().and_then(|var| std::env::var(var).ok())
    }
}

/// Backend registry file: backends plus their per-million-token prices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub backends: Vec<BackendConfig>,
    #[serde(default)]
    pub prices: PriceTable,
}

impl Registry {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: shown.clone(), source })?;
        let reg: Registry = serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: shown, source })?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for b in &self.backends {
            b.validate()?;
        }
        self.prices.validate().map_err(|e| ConfigError::Invalid { name: "prices".into(), reason: e.to_string() })
    }

    pub fn backend(&self, name: &str) -> Option<&BackendConfig> {
        self.backends.iter().find(|b| b.name == name)
    }
}
