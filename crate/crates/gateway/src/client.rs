use std::collections::HashMap;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use minilab_core::usage::{ledger_per_lead, ledger_total, CostError, LeadCosts, LedgerEntry, PriceTable, UsagePurpose, UsageRecord};
use minilab_core::{LeadId, Money, Timestamp};
use parking_lot::Mutex;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BackendConfig, ConfigError, Registry};
use crate::estimate_tokens;
use crate::limiter::Limiter;
use crate::transport::{SchemeTransport, Transport, TransportError, WireRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Attribution for the usage ledger; never sent on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageTag {
    pub lead_id: Option<LeadId>,
    pub purpose: UsagePurpose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub tag: Option<UsageTag>,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self { messages, tag: None }
    }

    pub fn tagged(mut self, lead_id: Option<LeadId>, purpose: UsagePurpose) -> Self {
        self.tag = Some(UsageTag { lead_id, purpose });
        self
    }

    fn check(&self) -> Result<(), GatewayError> {
        match self.messages.first() {
            None => Err(GatewayError::InvalidRequest("no messages".into())),
            Some(m) if m.role == Role::Assistant => Err(GatewayError::InvalidRequest("first message must be system or user".into())),
            Some(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: UsageRecord,
    /// Number of transport calls made, including the successful one.
    pub attempts: u32,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend {backend} timed out after {timeout_ms} ms")]
    Timeout { backend: String, timeout_ms: u64 },
    #[error("backend {backend} failed: {source}")]
    BackendError { backend: String, source: TransportError },
    #[error("backend {backend} still failing after {attempts} attempts: {last}")]
    ExhaustedRetries { backend: String, attempts: u32, last: TransportError },
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::UnknownBackend(_) => "UNKNOWN_BACKEND",
            GatewayError::InvalidRequest(_) => "INVALID_REQUEST",
            GatewayError::Timeout { .. } => "TIMEOUT",
            GatewayError::BackendError { .. } => "BACKEND_ERROR",
            GatewayError::ExhaustedRetries { .. } => "EXHAUSTED_RETRIES",
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            GatewayError::BackendError { source: TransportError::Status { status, .. }, .. }
            | GatewayError::ExhaustedRetries { last: TransportError::Status { status, .. }, .. } => Some(*status),
            _ => None,
        }
    }
}

/// What the campaign engine and curation service need from a model client.
pub trait ChatClient: Send + Sync {
    fn complete(&self, backend: &str, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    fn knows_backend(&self, _backend: &str) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(250), max_delay: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    /// Full-range jitter between half and all of the exponential delay.
    fn delay(&self, failed_attempts: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << failed_attempts.saturating_sub(1).min(16));
        let capped = exp.min(self.max_delay);
        if capped.is_zero() {
            return capped;
        }
        capped.mul_f64(rand::thread_rng().gen_range(0.5..=1.0))
    }
}

/// Append-only record of every successful response's usage.
#[derive(Debug, Default)]
pub struct UsageLedger {
    entries: Mutex<Vec<LedgerEntry>>,
}

impl UsageLedger {
    pub fn record(&self, entry: LedgerEntry) {
        self.entries.lock().push(entry);
    }

    pub fn entries(&self) -> Vec<LedgerEntry> {
        self.entries.lock().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn per_lead(&self, prices: &PriceTable) -> Result<LeadCosts, CostError> {
        ledger_per_lead(self.entries.lock().iter(), prices)
    }

    pub fn total(&self, prices: &PriceTable) -> Result<Money, CostError> {
        ledger_total(self.entries.lock().iter(), prices)
    }
}

type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub struct Gateway {
    backends: HashMap<String, (BackendConfig, Arc<Limiter>)>,
    prices: PriceTable,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    ledger: UsageLedger,
    clock: Clock,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("backends", &self.backend_names()).field("retry", &self.retry).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(registry: Registry) -> Result<Self, ConfigError> {
        Self::with_transport(registry, Arc::new(SchemeTransport::default()))
    }

    pub fn with_transport(registry: Registry, transport: Arc<dyn Transport>) -> Result<Self, ConfigError> {
        registry.validate()?;
        let mut backends = HashMap::new();
        for cfg in registry.backends {
            if backends.contains_key(&cfg.name) {
                return Err(ConfigError::Invalid { name: cfg.name, reason: "duplicate backend name".into() });
            }
            let limiter = Limiter::new(cfg.max_concurrency as usize);
            backends.insert(cfg.name.clone(), (cfg, limiter));
        }
        Ok(Self {
            backends,
            prices: registry.prices,
            transport,
            retry: RetryPolicy::default(),
            ledger: UsageLedger::default(),
            clock: Arc::new(Timestamp::now),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Overrides the timestamp stamped on usage records.
    pub fn with_clock(mut self, clock: impl Fn() -> Timestamp + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn backend_names(&self) -> Vec<String> {
        let mut names: Vec<_> = self.backends.keys().cloned().collect();
        names.sort();
        names
    }

    pub fn backend(&self, name: &str) -> Option<&BackendConfig> {
        self.backends.get(name).map(|(c, _)| c)
    }

    pub fn prices(&self) -> &PriceTable {
        &self.prices
    }

    pub fn ledger(&self) -> &UsageLedger {
        &self.ledger
    }

    fn attempt(&self, cfg: &BackendConfig, limiter: &Arc<Limiter>, body: &WireRequest) -> Result<Result<crate::WireResponse, TransportError>, GatewayError> {
        let permit = limiter.acquire();
        let (tx, rx) = mpsc::channel();
        let transport = Arc::clone(&self.transport);
        let cfg_owned = cfg.clone();
        let body = body.clone();
        let key = cfg.api_key();
        std::thread::spawn(move || {
            let _permit = permit;
            let _ = tx.send(transport.post_chat(&cfg_owned, key.as_deref(), &body));
        });
        match rx.recv_timeout(Duration::from_millis(cfg.timeout_ms)) {
            Ok(result) => Ok(result),
            Err(_) => Err(GatewayError::Timeout { backend: cfg.name.clone(), timeout_ms: cfg.timeout_ms }),
        }
    }
}

impl ChatClient for Gateway {
    fn knows_backend(&self, backend: &str) -> bool {
        self.backends.contains_key(backend)
    }

    fn complete(&self, backend: &str, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.check()?;
        let (cfg, limiter) = self.backends.get(backend).ok_or_else(|| GatewayError::UnknownBackend(backend.to_owned()))?;
        let body = WireRequest { model: cfg.model.clone(), messages: request.messages.clone(), temperature: cfg.temperature };
        let max_attempts = self.retry.max_attempts.max(1);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(cfg, limiter, &body)? {
                Ok(resp) => {
                    let text = resp.text().unwrap_or_default().to_owned();
                    let (prompt_tokens, completion_tokens) = match resp.usage {
                        Some(u) => (u.prompt_tokens, u.completion_tokens),
                        None => {
                            let prompt: String = request.messages.iter().map(|m| m.content.as_str()).collect();
                            (estimate_tokens(&prompt), estimate_tokens(&text))
                        }
                    };
                    let usage = UsageRecord { prompt_tokens, completion_tokens, backend_name: cfg.name.clone(), timestamp: (self.clock)() };
                    let tag = request.tag.clone().unwrap_or(UsageTag { lead_id: None, purpose: UsagePurpose::Draft });
                    self.ledger.record(LedgerEntry { lead_id: tag.lead_id, purpose: tag.purpose, usage: usage.clone() });
                    return Ok(ChatResponse { text, usage, attempts });
                }
                Err(e) if e.is_transient() => {
                    if attempts >= max_attempts {
                        return Err(GatewayError::ExhaustedRetries { backend: cfg.name.clone(), attempts, last: e });
                    }
                    std::thread::sleep(self.retry.delay(attempts));
                }
                Err(e) => return Err(GatewayError::BackendError { backend: cfg.name.clone(), source: e }),
            }
        }
    }
}

impl<C: ChatClient + ?Sized> ChatClient for Arc<C> {
    fn complete(&self, backend: &str, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(backend, request)
    }

    fn knows_backend(&self, backend: &str) -> bool {
        (**self).knows_backend(backend)
    }
}
