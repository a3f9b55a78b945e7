//! In-process backends for offline runs and tests.
//!
//! `mock://echo` returns the last user message verbatim. `mock://template`
//! writes a short deterministic outreach message derived from the prompt, with
//! a `Subject:` line when the system prompt mentions email.

use sha2::{Digest, Sha256};

use crate::client::Role;
use crate::config::BackendConfig;
use crate::estimate_tokens;
use crate::transport::{Transport, TransportError, WireChoice, WireMessage, WireRequest, WireResponse, WireUsage};

#[derive(Debug, Default, Clone, Copy)]
pub struct MockTransport;

const OPENERS: [&str; 4] = [
    "I came across your recent work and wanted to reach out.",
    "Your team's focus caught my attention this week.",
    "I noticed a few things about your company that stood out.",
    "Following up on what your team has been building lately.",
];

const CLOSERS: [&str; 3] = [
    "Would a 15-minute call next week be useful?",
    "Open to a short conversation about this?",
    "Happy to share more details if that is helpful.",
];

impl Transport for MockTransport {
    fn post_chat(&self, cfg: &BackendConfig, _api_key: Option<&str>, body: &WireRequest) -> Result<WireResponse, TransportError> {
        let kind = cfg.base_url.host_str().unwrap_or("");
        let text = match kind {
            "echo" => last_of(body, Role::User).unwrap_or_default().to_owned(),
            "template" => template_reply(&cfg.model, body),
            other => {
                return Err(TransportError::Status { status: 404, body: format!("unknown mock backend {other:?}") });
            }
        };
        let prompt: String = body.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
        Ok(WireResponse {
            choices: vec![WireChoice { message: WireMessage { role: Some("assistant".into()), content: Some(text.clone()) } }],
            usage: Some(WireUsage { prompt_tokens: estimate_tokens(&prompt), completion_tokens: estimate_tokens(&text) }),
        })
    }
}

fn last_of(body: &WireRequest, role: Role) -> Option<&str> {
    body.messages.iter().rev().find(|m| m.role == role).map(|m| m.content.as_str())
}

fn template_reply(model: &str, body: &WireRequest) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    for m in &body.messages {
        h.update(m.content.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    let opener = OPENERS[digest[0] as usize % OPENERS.len()];
    let closer = CLOSERS[digest[1] as usize % CLOSERS.len()];
    let system = last_of(body, Role::System).unwrap_or_default();
    let topic = body
        .messages
        .iter()
        .find_map(|m| m.content.lines().find_map(|l| l.strip_prefix("Value proposition:")))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .unwrap_or("what we are building");
    let is_reply = last_of(body, Role::User).is_some_and(|u| u.starts_with("Reply to"));
    let core = if is_reply {
        format!("Thanks for getting back to me. To answer briefly: {topic}.")
    } else {
        format!("{opener} We help teams like yours with {topic}.")
    };
    if system.to_lowercase().contains("email") {
        format!("Subject: Quick idea for your team\n\n{core} {closer}")
    } else {
        format!("{core} {closer}")
    }
}
