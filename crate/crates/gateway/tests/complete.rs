use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use minilab_core::usage::{PriceTable, UsagePurpose};
use minilab_core::{LeadId, Money, Timestamp};
use minilab_gateway::*;

fn cfg(name: &str, url: &str) -> BackendConfig {
    BackendConfig::new(name, url, "test-model")
}

fn ok_response(text: &str) -> WireResponse {
    WireResponse {
        choices: vec![WireChoice { message: WireMessage { role: Some("assistant".into()), content: Some(text.into()) } }],
        usage: Some(WireUsage { prompt_tokens: 3000, completion_tokens: 400 }),
    }
}

/// Fails with the scripted statuses, then succeeds.
struct Scripted {
    failures: Mutex<Vec<u16>>,
    calls: AtomicU32,
}

impl Transport for Scripted {
    fn post_chat(&self, _: &BackendConfig, _: Option<&str>, _: &WireRequest) -> Result<WireResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut f = self.failures.lock().unwrap();
        if f.is_empty() {
            Ok(ok_response("done"))
        } else {
            let status = f.remove(0);
            Err(TransportError::Status { status, body: String::new() })
        }
    }
}

fn scripted(statuses: &[u16]) -> Arc<Scripted> {
    Arc::new(Scripted { failures: Mutex::new(statuses.to_vec()), calls: AtomicU32::new(0) })
}

fn gateway_with(t: Arc<dyn Transport>, c: BackendConfig) -> Gateway {
    Gateway::with_transport(Registry { backends: vec![c], prices: PriceTable::default() }, t)
        .unwrap()
        .with_retry(RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(1), max_delay: Duration::from_millis(5) })
}

fn hello() -> ChatRequest {
    ChatRequest::new(vec![ChatMessage::system("be brief"), ChatMessage::user("hello")])
}

#[test]
fn two_429s_then_success_takes_three_attempts() {
    let t = scripted(&[429, 429]);
    let gw = gateway_with(t.clone(), cfg("m", "mock://scripted"));
    let resp = gw.complete("m", &hello()).unwrap();
    assert_eq!(resp.attempts, 3);
    assert_eq!(t.calls.load(Ordering::SeqCst), 3);
    assert_eq!(resp.text, "done");
    assert_eq!(gw.ledger().len(), 1);
}

#[test]
fn persistent_5xx_exhausts_retries() {
    let t = scripted(&[503, 502, 500, 500]);
    let gw = gateway_with(t.clone(), cfg("m", "mock://scripted"));
    let err = gw.complete("m", &hello()).unwrap_err();
    assert_eq!(err.code(), "EXHAUSTED_RETRIES");
    assert_eq!(err.status(), Some(500));
    assert_eq!(t.calls.load(Ordering::SeqCst), 3);
    assert!(gw.ledger().is_empty());
}

#[test]
fn client_errors_are_not_retried() {
    let t = scripted(&[400]);
    let gw = gateway_with(t.clone(), cfg("m", "mock://scripted"));
    let err = gw.complete("m", &hello()).unwrap_err();
    assert_eq!(err.code(), "BACKEND_ERROR");
    assert_eq!(err.status(), Some(400));
    assert_eq!(t.calls.load(Ordering::SeqCst), 1);
}

struct Sleepy(Duration);

impl Transport for Sleepy {
    fn post_chat(&self, _: &BackendConfig, _: Option<&str>, _: &WireRequest) -> Result<WireResponse, TransportError> {
        std::thread::sleep(self.0);
        Ok(ok_response("late"))
    }
}

#[test]
fn slow_backend_times_out() {
    let mut c = cfg("slow", "mock://sleepy");
    c.timeout_ms = 50;
    let gw = gateway_with(Arc::new(Sleepy(Duration::from_millis(500))), c);
    let err = gw.complete("slow", &hello()).unwrap_err();
    assert_eq!(err.code(), "TIMEOUT");
}

/// Records the peak number of simultaneous calls.
#[derive(Default)]
struct Gauge {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl Transport for Gauge {
    fn post_chat(&self, _: &BackendConfig, _: Option<&str>, _: &WireRequest) -> Result<WireResponse, TransportError> {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(5));
        self.current.fetch_sub(1, Ordering::SeqCst);
        Ok(ok_response("ok"))
    }
}

#[test]
fn concurrency_never_exceeds_limit() {
    for k in [1u32, 3] {
        let gauge = Arc::new(Gauge::default());
        let mut c = cfg("g", "mock://gauge");
        c.max_concurrency = k;
        let gw = Arc::new(gateway_with(gauge.clone(), c));
        std::thread::scope(|s| {
            for _ in 0..24 {
                let gw = gw.clone();
                s.spawn(move || gw.complete("g", &hello()).unwrap());
            }
        });
        assert!(gauge.peak.load(Ordering::SeqCst) <= k as usize);
        assert_eq!(gw.ledger().len(), 24);
    }
}

#[test]
fn ledger_costs_match_hand_arithmetic() {
    let mut prices = PriceTable::default();
    prices.insert("m", Money::from_str("2.5").unwrap(), Money::from(10));
    let t = scripted(&[]);
    let gw = Gateway::with_transport(Registry { backends: vec![cfg("m", "mock://x")], prices }, t)
        .unwrap()
        .with_clock(|| Timestamp(1_700_000_000));
    let lead = LeadId::from("lead-1");
    for _ in 0..4 {
        let req = hello().tagged(Some(lead.clone()), UsagePurpose::Draft);
        let resp = gw.complete("m", &req).unwrap();
        assert_eq!(resp.usage.timestamp, Timestamp(1_700_000_000));
    }
    let per = gw.ledger().per_lead(gw.prices()).unwrap();
    assert_eq!(per.per_lead[&lead], Money::from_str("0.046").unwrap());
    assert_eq!(gw.ledger().total(gw.prices()).unwrap(), Money::from_str("0.046").unwrap());
}

#[test]
fn concurrent_ledger_total_is_exact() {
    let mut prices = PriceTable::default();
    prices.insert("m", Money::from_str("2.5").unwrap(), Money::from(10));
    let gw = Arc::new(Gateway::with_transport(Registry { backends: vec![cfg("m", "mock://x")], prices }, scripted(&[])).unwrap());
    std::thread::scope(|s| {
        for i in 0..8 {
            let gw = gw.clone();
            s.spawn(move || {
                for _ in 0..25 {
                    let req = hello().tagged(Some(LeadId::from(format!("lead-{i}"))), UsagePurpose::Draft);
                    gw.complete("m", &req).unwrap();
                }
            });
        }
    });
    // 200 calls × 0.0115
    assert_eq!(gw.ledger().total(gw.prices()).unwrap(), Money::from_str("2.3").unwrap());
    assert_eq!(gw.ledger().per_lead(gw.prices()).unwrap().per_lead.len(), 8);
}

#[test]
fn template_mock_is_deterministic_and_writes_subjects() {
    let reg = Registry { backends: vec![cfg("t", "mock://template")], prices: PriceTable::default() };
    let gw = Gateway::new(reg).unwrap();
    let req = ChatRequest::new(vec![
        ChatMessage::system("Write a cold email."),
        ChatMessage::user("Value proposition: faster invoicing\nDraft step 1."),
    ]);
    let a = gw.complete("t", &req).unwrap();
    let b = gw.complete("t", &req).unwrap();
    assert_eq!(a.text, b.text);
    assert!(a.text.starts_with("Subject: "));
    assert!(a.text.contains("faster invoicing"));
}

/// One-shot HTTP server answering every request with `status` and `body`, capturing request bodies.
fn serve(status: u16, body: &'static str, hits: usize) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for stream in listener.incoming().take(hits) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_owned();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            seen.push(format!("{auth}\n{}", String::from_utf8(buf).unwrap()));
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
        seen
    });
    (format!("http://{addr}/v1"), handle)
}

#[test]
fn http_transport_speaks_chat_completions() {
    let (url, server) = serve(
        200,
        r#"{"choices":[{"message":{"role":"assistant","content":"hi back"}}],"usage":{"prompt_tokens":7,"completion_tokens":2}}"#,
        1,
    );
    let mut c = cfg("live", &url);
    c.api_key_env = Some("MINILAB_TEST_KEY_LIVE".into());
    std::env::set_var("MINILAB_TEST_KEY_LIVE", "sk-test");
    let gw = Gateway::new(Registry { backends: vec![c], prices: PriceTable::default() }).unwrap();
    let resp = gw.complete("live", &hello()).unwrap();
    assert_eq!(resp.text, "hi back");
    assert_eq!((resp.usage.prompt_tokens, resp.usage.completion_tokens), (7, 2));
    let seen = server.join().unwrap();
    assert!(seen[0].starts_with("authorization: Bearer sk-test") || seen[0].starts_with("Authorization: Bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(seen[0].split_once('\n').unwrap().1).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "hello");
}

#[test]
fn http_429_is_retried_until_exhausted() {
    let (url, server) = serve(429, r#"{"error":"slow down"}"#, 3);
    let gw = Gateway::new(Registry { backends: vec![cfg("live", &url)], prices: PriceTable::default() })
        .unwrap()
        .with_retry(RetryPolicy::immediate(3));
    let err = gw.complete("live", &hello()).unwrap_err();
    assert_eq!(err.code(), "EXHAUSTED_RETRIES");
    assert_eq!(err.status(), Some(429));
    assert_eq!(server.join().unwrap().len(), 3);
}
