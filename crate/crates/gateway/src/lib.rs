//! Uniform chat-completion client over OpenAI-compatible backends.
//!
//! [`Gateway`] owns the backend registry, enforces per-backend concurrency
//! limits and timeouts, retries transient failures, and records every
//! response's token usage in an append-only ledger. [`research`] fetches
//! source pages and turns them into a per-lead dossier through the same
//! client.

mod client;
mod config;
mod limiter;
pub mod mock;
pub mod research;
mod transport;

pub use client::{ChatClient, ChatMessage, ChatRequest, ChatResponse, Gateway, GatewayError, RetryPolicy, Role, UsageLedger, UsageTag};
pub use config::{BackendConfig, ConfigError, Registry};
pub use transport::{HttpTransport, SchemeTransport, Transport, TransportError, WireChoice, WireMessage, WireRequest, WireResponse, WireUsage};

/// Rough token estimate used when a backend omits usage: four characters per token.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}
