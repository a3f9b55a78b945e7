//! Fetch source pages, strip markup, and summarize them into a dossier.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use minilab_core::domain::{Lead, ResearchDossier, SourceDocument};
use minilab_core::usage::UsagePurpose;
use minilab_core::Timestamp;
use scraper::{Html, Node};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

use crate::client::{ChatClient, ChatMessage, ChatRequest, GatewayError};

/// Four characters per token; 2,000 tokens fits the smallest 8K-context learners.
pub const DEFAULT_SUMMARY_CHARS: usize = 8_000;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FetchError {
    /// `status` is 0 when no HTTP status was received.
    #[error("fetch of {url} failed with status {status}")]
    FetchFailed { url: String, status: u16 },
    #[error("no text could be extracted from {url}")]
    EmptyExtraction { url: String },
    #[error("unsupported URL scheme in {url}")]
    UnsupportedScheme { url: String },
}

impl FetchError {
    pub fn code(&self) -> &'static str {
        match self {
            FetchError::FetchFailed { .. } => "FETCH_FAILED",
            FetchError::EmptyExtraction { .. } => "EMPTY_EXTRACTION",
            FetchError::UnsupportedScheme { .. } => "UNSUPPORTED_SCHEME",
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ResearchError {
    #[error("none of the {attempted} sources could be fetched")]
    NoSources { attempted: usize, failures: Vec<FetchError> },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl ResearchError {
    pub fn code(&self) -> &'static str {
        match self {
            ResearchError::NoSources { .. } => "NO_SOURCES",
            ResearchError::Gateway(e) => e.code(),
        }
    }
}

/// Retrieves raw markup for a URL. A headless-browser implementation would slot in here.
pub trait Fetcher: Send + Sync {
    fn fetch_raw(&self, url: &Url) -> Result<String, FetchError>;
}

impl<F: Fetcher + ?Sized> Fetcher for Arc<F> {
    fn fetch_raw(&self, url: &Url) -> Result<String, FetchError> {
        (**self).fetch_raw(url)
    }
}

/// Plain-text content of an HTML document: every text node outside
/// script/style/noscript/template, whitespace-collapsed and space-joined.
pub fn strip_markup(html: &str) -> String {
    let doc = Html::parse_document(html);
    let mut words: Vec<&str> = Vec::new();
    for node in doc.tree.root().descendants() {
        let Node::Text(text) = node.value() else { continue };
        let hidden = node.ancestors().any(|a| {
            a.value().as_element().is_some_and(|e| matches!(e.name(), "script" | "style" | "noscript" | "template"))
        });
        if !hidden {
            words.extend(text.split_whitespace());
        }
    }
    words.join(" ")
}

pub fn fetch_source(fetcher: &dyn Fetcher, url: &Url, now: Timestamp) -> Result<SourceDocument, FetchError> {
    let raw = fetcher.fetch_raw(url)?;
    let text = strip_markup(&raw);
    if text.is_empty() {
        return Err(FetchError::EmptyExtraction { url: url.to_string() });
    }
    Ok(SourceDocument { url: url.clone(), fetched_at: now, text })
}

/// Hex SHA-256 of the URL string; the corpus file stem for that URL.
pub fn url_hash(url: &Url) -> String {
    Sha256::digest(url.as_str().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_or_404(path: &Path, url: &Url) -> Result<String, FetchError> {
    std::fs::read_to_string(path).map_err(|e| FetchError::FetchFailed {
        url: url.to_string(),
        status: if e.kind() == std::io::ErrorKind::NotFound { 404 } else { 0 },
    })
}

/// Local corpus: `{dir}/{url_hash}.html`, with the expected extraction in `{url_hash}.txt`.
#[derive(Debug, Clone)]
pub struct CorpusFetcher {
    dir: PathBuf,
}

impl CorpusFetcher {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn page_path(&self, url: &Url) -> PathBuf {
        self.dir.join(format!("{}.html", url_hash(url)))
    }

    pub fn expected_text(&self, url: &Url) -> std::io::Result<String> {
        std::fs::read_to_string(self.dir.join(format!("{}.txt", url_hash(url))))
    }

    /// Stores a page and its expected extraction.
    pub fn insert(&self, url: &Url, html: &str) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        std::fs::write(self.page_path(url), html)?;
        std::fs::write(self.dir.join(format!("{}.txt", url_hash(url))), strip_markup(html))
    }
}

impl Fetcher for CorpusFetcher {
    fn fetch_raw(&self, url: &Url) -> Result<String, FetchError> {
        read_or_404(&self.page_path(url), url)
    }
}

/// `file://` pages plus plain HTTP(S) GET.
#[derive(Debug, Clone)]
pub struct HttpFetcher {
    pub timeout: Duration,
}

impl Default for HttpFetcher {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(20) }
    }
}

impl Fetcher for HttpFetcher {
    fn fetch_raw(&self, url: &Url) -> Result<String, FetchError> {
        match url.scheme() {
            "file" => {
                let path = url.to_file_path().map_err(|_| FetchError::UnsupportedScheme { url: url.to_string() })?;
                read_or_404(&path, url)
            }
            "http" | "https" => {
                let agent: ureq::Agent =
                    ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(self.timeout)).build().into();
                let failed = |status| FetchError::FetchFailed { url: url.to_string(), status };
                let mut resp = agent.get(url.as_str()).call().map_err(|_| failed(0))?;
                let status = resp.status().as_u16();
                if !(200..300).contains(&status) {
                    return Err(failed(status));
                }
                resp.body_mut().read_to_string().map_err(|_| failed(status))
            }
            _ => Err(FetchError::UnsupportedScheme { url: url.to_string() }),
        }
    }
}

/// Tries the corpus first (when configured), then `file://` / HTTP.
#[derive(Debug, Clone, Default)]
pub struct DefaultFetcher {
    pub corpus: Option<CorpusFetcher>,
    pub http: HttpFetcher,
}

impl Fetcher for DefaultFetcher {
    fn fetch_raw(&self, url: &Url) -> Result<String, FetchError> {
        if let Some(corpus) = &self.corpus {
            if corpus.page_path(url).exists() {
                return corpus.fetch_raw(url);
            }
        }
        self.http.fetch_raw(url)
    }
}

/// What the campaign engine calls when a lead is added.
pub trait Researcher: Send + Sync {
    fn research(&self, lead: &Lead, goals: &[String], now: Timestamp) -> Result<ResearchDossier, ResearchError>;
}

pub struct ResearchProvider {
    fetcher: Arc<dyn Fetcher>,
    client: Arc<dyn ChatClient>,
    backend: String,
    pub max_summary_chars: usize,
    pub fetch_concurrency: usize,
}

impl std::fmt::Debug for ResearchProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResearchProvider").field("backend", &self.backend).field("max_summary_chars", &self.max_summary_chars).finish()
    }
}

impl ResearchProvider {
    pub fn new(fetcher: Arc<dyn Fetcher>, client: Arc<dyn ChatClient>, backend: impl Into<String>) -> Self {
        Self { fetcher, client, backend: backend.into(), max_summary_chars: DEFAULT_SUMMARY_CHARS, fetch_concurrency: 4 }
    }

    /// Fetches `sources` (bounded concurrency), then asks the backend for one summary over all of them.
    pub fn research_lead(&self, lead: &Lead, goals: &[String], sources: &[Url], now: Timestamp) -> Result<ResearchDossier, ResearchError> {
        let results = self.fetch_all(sources, now);
        let mut docs = Vec::new();
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(doc) => docs.push(doc),
                Err(e) => failures.push(e),
            }
        }
        if docs.is_empty() {
            return Err(ResearchError::NoSources { attempted: sources.len(), failures });
        }
        let request = ChatRequest::new(vec![
            ChatMessage::system(
                "You are a market research analyst preparing a brief on a sales prospect. \
                 Use only facts stated in the provided sources and keep figures exactly as written.",
            ),
            ChatMessage::user(research_prompt(lead, goals, &docs)),
        ])
        .tagged(Some(lead.id.clone()), UsagePurpose::Research);
        let resp = self.client.complete(&self.backend, &request)?;
        let mut usage = resp.usage;
        usage.timestamp = now;
        Ok(ResearchDossier {
            lead_id: lead.id.clone(),
            summary: truncate_chars(&resp.text, self.max_summary_chars),
            sources: docs,
            model_backend: self.backend.clone(),
            usage,
        })
    }

    fn fetch_all(&self, sources: &[Url], now: Timestamp) -> Vec<Result<SourceDocument, FetchError>> {
        let width = self.fetch_concurrency.max(1);
        let mut out = Vec::with_capacity(sources.len());
        for chunk in sources.chunks(width) {
            std::thread::scope(|s| {
                let handles: Vec<_> =
                    chunk.iter().map(|url| s.spawn(move || fetch_source(self.fetcher.as_ref(), url, now))).collect();
                out.extend(handles.into_iter().map(|h| h.join().expect("fetch thread panicked")));
            });
        }
        out
    }
}

impl Researcher for ResearchProvider {
    fn research(&self, lead: &Lead, goals: &[String], now: Timestamp) -> Result<ResearchDossier, ResearchError> {
        let urls: Vec<Url> = lead.source_urls().into_iter().filter_map(|u| Url::parse(u).ok()).collect();
        self.research_lead(lead, goals, &urls, now)
    }
}

fn research_prompt(lead: &Lead, goals: &[String], docs: &[SourceDocument]) -> String {
    let mut p = String::from("Prospect:\n");
    for (k, v) in &lead.profile {
        p.push_str(&format!("- {k}: {v}\n"));
    }
    p.push_str("\nResearch goals:\n");
    for g in goals {
        p.push_str(&format!("- {g}\n"));
    }
    p.push_str("\nSources:\n");
    for (i, d) in docs.iter().enumerate() {
        p.push_str(&format!("[{}] {}\n{}\n\n", i + 1, d.url, d.text));
    }
    p.push_str("Write a concise research summary addressing each goal.");
    p
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((idx, _)) => s[..idx].to_owned(),
        None => s.to_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_markup_and_hidden_elements() {
        let html = "<html><head><title>Acme</title><style>p{}</style></head>\
                    <body><p>Acme raised   $12M</p><script>var x=1;</script><div>in <b>2024</b>.</div></body></html>";
        assert_eq!(strip_markup(html), "Acme Acme raised $12M in 2024 .");
        assert_eq!(strip_markup("<div><span></span><br/></div>"), "");
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        assert_eq!(truncate_chars("héllo", 2), "hé");
        assert_eq!(truncate_chars("hi", 10), "hi");
    }

    #[test]
    fn url_hash_is_hex_sha256() {
        let h = url_hash(&Url::parse("https://example.com/").unwrap());
        assert_eq!(h.len(), 64);
        assert!(h.chars().all(|c| c.is_ascii_hexdigit()));
    }
}
