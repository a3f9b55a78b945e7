//! Seeded recipient behavior: every outbound message is delivered, opened with
//! `p_open`, and only opened messages can be clicked, replied to or
//! unsubscribed from.

use std::collections::BTreeMap;

use minilab_core::domain::{Direction, EngagementEvent, EventKind, MessageRecord};
use minilab_core::{ArmId, LeadId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("message {0} is not outbound")]
    NotOutbound(String),
    #[error("profile {name}: {reason}")]
    InvalidProfile { name: String, reason: String },
    #[error("unknown bundled profile {0:?}")]
    UnknownProfile(String),
    #[error("cannot parse profiles: {0}")]
    Parse(String),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::NotOutbound(_) => "NOT_OUTBOUND",
            SimError::InvalidProfile { .. } => "INVALID_PROFILE",
            SimError::UnknownProfile(_) => "UNKNOWN_PROFILE",
            SimError::Parse(_) => "PARSE_ERROR",
        }
    }
}

/// Uniform delay in seconds, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Latency {
    pub min: u64,
    pub max: u64,
}

impl Latency {
    pub const fn new(min: u64, max: u64) -> Self {
        Self { min, max }
    }
}

/// Open latency runs from send; click, reply and unsubscribe latencies run from the open.
/// Unsubscribes reuse the click latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub open: Latency,
    pub click: Latency,
    pub reply: Latency,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self { open: Latency::new(600, 172_800), click: Latency::new(5, 3_600), reply: Latency::new(900, 86_400) }
    }
}

pub const DEFAULT_P_UNSUB: f64 = 0.01;

fn default_unsub() -> f64 {
    DEFAULT_P_UNSUB
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub p_open: f64,
    pub p_click_given_open: f64,
    pub p_reply_given_open: f64,
    #[serde(default = "default_unsub")]
    pub p_unsub_given_open: f64,
    #[serde(default)]
    pub latency: LatencyModel,
}

impl BehaviorProfile {
    pub fn new(p_open: f64, p_click_given_open: f64, p_reply_given_open: f64, p_unsub_given_open: f64) -> Self {
        Self { p_open, p_click_given_open, p_reply_given_open, p_unsub_given_open, latency: LatencyModel::default() }
    }

    /// Converts unconditional percentages (CTR, open rate, reply rate) to the conditional form.
    pub fn from_marginal_percents(ctr: f64, open_rate: f64, reply_rate: f64) -> Self {
        Self::new(open_rate / 100.0, ctr / open_rate, reply_rate / open_rate, DEFAULT_P_UNSUB)
    }

    pub fn validate(&self, name: &str) -> Result<(), SimError> {
        let bad = |reason: String| SimError::InvalidProfile { name: name.to_owned(), reason };
        for (field, p) in [
            ("p_open", self.p_open),
            ("p_click_given_open", self.p_click_given_open),
            ("p_reply_given_open", self.p_reply_given_open),
            ("p_unsub_given_open", self.p_unsub_given_open),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(format!("{field} = {p} is not a probability")));
            }
        }
        for (field, l) in [("open", self.latency.open), ("click", self.latency.click), ("reply", self.latency.reply)] {
            if l.min > l.max {
                return Err(bad(format!("{field} latency min exceeds max")));
            }
        }
        Ok(())
    }
}

/// CTR, open rate and response rate (percent) per bundled profile, from the email-metrics table.
pub const TABLE1_RATES: [(&str, f64, f64, f64); 20] = [
    ("table1-gpt4o", 3.2, 33.2, 5.7),
    ("table1-gpt41", 3.4, 34.1, 6.2),
    ("table1-claude37-sonnet", 3.1, 32.8, 5.4),
    ("table1-claude4-sonnet", 3.5, 35.2, 6.5),
    ("table1-gemma12b-lora", 3.3, 28.8, 5.9),
    ("table1-gemma4b-lora", 3.0, 27.5, 5.1),
    ("table1-gemma1b-lora", 2.7, 26.8, 4.2),
    ("table1-qwen3-4b-lora", 2.9, 27.2, 4.9),
    ("table1-qwen3-1.7b-lora", 2.8, 26.6, 4.5),
    ("table1-qwen2-1.5b-lora", 2.6, 26.1, 4.3),
    ("table1-llama3b-lora", 3.1, 28.9, 5.2),
    ("table1-llama1b-lora", 2.5, 26.4, 3.9),
    ("table1-gemma12b-full", 3.4, 31.2, 6.1),
    ("table1-gemma4b-full", 3.2, 30.6, 5.6),
    ("table1-gemma1b-full", 2.9, 29.0, 4.8),
    ("table1-qwen3-4b-full", 3.1, 30.3, 5.4),
    ("table1-qwen3-1.7b-full", 3.0, 29.7, 5.1),
    ("table1-qwen2-1.5b-full", 2.8, 29.3, 4.9),
    ("table1-llama3b-full", 3.2, 30.4, 5.5),
    ("table1-llama1b-full", 2.7, 29.5, 4.4),
];

pub fn bundled_profile(name: &str) -> Option<BehaviorProfile> {
    TABLE1_RATES
        .iter()
        .find(|(n, ..)| *n == name)
        .map(|&(_, ctr, open, reply)| BehaviorProfile::from_marginal_percents(ctr, open, reply))
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    TABLE1_RATES.iter().map(|(n, ..)| *n)
}

/// Profile file entry: a bundled name or an inline profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Named(String),
    Inline(BehaviorProfile),
}

impl ProfileRef {
    pub fn resolve(&self, arm: &str) -> Result<BehaviorProfile, SimError> {
        let p = match self {
            ProfileRef::Named(n) => bundled_profile(n).ok_or_else(|| SimError::UnknownProfile(n.clone()))?,
            ProfileRef::Inline(p) => *p,
        };
        p.validate(arm)?;
        Ok(p)
    }
}

/// Parses a profile file: `{"arm_id": "table1-gpt4o" | {...inline...}, ...}`.
pub fn parse_profiles(json: &str) -> Result<BTreeMap<ArmId, BehaviorProfile>, SimError> {
    let raw: BTreeMap<String, ProfileRef> = serde_json::from_str(json).map_err(|e| SimError::Parse(e.to_string()))?;
    raw.into_iter().map(|(arm, r)| Ok((ArmId::from(arm.as_str()), r.resolve(&arm)?))).collect()
}

const REPLIES: [&str; 5] = [
    "Thanks for reaching out. Can you send pricing details?",
    "Interesting timing, we are looking at this now. What does onboarding involve?",
    "Not a priority this quarter, but keep me posted.",
    "Who else in our industry uses this?",
    "Happy to chat. Does Thursday afternoon work?",
];

fn stream(seed: u64, lead: &LeadId, message: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(lead.as_str().as_bytes());
    h.update([0u8]);
    h.update(message.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn draw(rng: &mut ChaCha8Rng, l: Latency) -> u64 {
    rng.gen_range(l.min..=l.max)
}

/// Engagement events for one outbound message, in timestamp order. The random stream is keyed by
/// (seed, lead, message) and a fixed number of draws is consumed regardless of outcome.
pub fn simulate_message(lead: &LeadId, message: &MessageRecord, profile: &BehaviorProfile, seed: u64) -> Result<Vec<EngagementEvent>, SimError> {
    if message.direction != Direction::Outbound {
        return Err(SimError::NotOutbound(message.id.to_string()));
    }
    let mut rng = stream(seed, lead, message.id.as_str());
    let u: [f64; 4] = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
    let lat = profile.latency;
    let (d_open, d_click, d_reply, d_unsub) = (draw(&mut rng, lat.open), draw(&mut rng, lat.click), draw(&mut rng, lat.reply), draw(&mut rng, lat.click));
    let reply_text = REPLIES[rng.gen_range(0..REPLIES.len())];

    let sent = message.timestamp;
    let ev = |kind, t| EngagementEvent::new(lead.clone(), kind, t, message.id.clone());
    let mut out = vec![ev(EventKind::Delivered, sent)];
    if u[0] < profile.p_open {
        let opened = sent.plus_secs(d_open);
        out.push(ev(EventKind::Open, opened));
        if u[1] < profile.p_click_given_open {
            out.push(ev(EventKind::Click, opened.plus_secs(d_click)));
        }
        if u[2] < profile.p_reply_given_open {
            let mut e = ev(EventKind::Reply, opened.plus_secs(d_reply));
            e.body = Some(reply_text.to_owned());
            out.push(e);
        }
        if u[3] < profile.p_unsub_given_open {
            out.push(ev(EventKind::Unsubscribe, opened.plus_secs(d_unsub)));
        }
    }
    out.sort_by_key(|e| (e.timestamp, e.kind));
    Ok(out)
}
