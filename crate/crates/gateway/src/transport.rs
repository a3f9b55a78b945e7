use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::ChatMessage;
use crate::config::BackendConfig;
use crate::mock::MockTransport;

/// OpenAI chat-completions request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(default)]
    pub role: Option<String>,
    #[serde(default)]
    pub content: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireChoice {
    pub message: WireMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub choices: Vec<WireChoice>,
    #[serde(default)]
    pub usage: Option<WireUsage>,
}

impl WireResponse {
    pub fn text(&self) -> Option<&str> {
        self.choices.first().and_then(|c| c.message.content.as_deref())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed response: {0}")]
    Decode(String),
}

impl TransportError {
    /// 429, 5xx and connection failures are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status == 429 || (500..600).contains(status),
            TransportError::Network(_) => true,
            TransportError::Decode(_) => false,
        }
    }
}

/// Sends one chat-completions call. Implementations must be safe to call from many threads.
pub trait Transport: Send + Sync {
    fn post_chat(&self, cfg: &BackendConfig, api_key: Option<&str>, body: &WireRequest) -> Result<WireResponse, TransportError>;
}

/// Blocking HTTP transport for OpenAI-compatible endpoints.
#[derive(Debug, Default, Clone, Copy)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_chat(&self, cfg: &BackendConfig, api_key: Option<&str>, body: &WireRequest) -> Result<WireResponse, TransportError> {
        let url = format!("{}/chat/completions", cfg.base_url.as_str().trim_end_matches('/'));
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        let mut req = agent.post(&url).header("content-type", "application/json");
        if let Some(key) = api_key {
            req = req.header("authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string()))
    }
}

/// Routes `mock://` backends to the in-process mocks and everything else over HTTP.
#[derive(Debug, Default, Clone, Copy)]
pub struct SchemeTransport {
    http: HttpTransport,
    mock: MockTransport,
}

impl Transport for SchemeTransport {
    fn post_chat(&self, cfg: &BackendConfig, api_key: Option<&str>, body: &WireRequest) -> Result<WireResponse, TransportError> {
        if cfg.base_url.scheme() == "mock" {
            self.mock.post_chat(cfg, api_key, body)
        } else {
            self.http.post_chat(cfg, api_key, body)
        }
    }
}
