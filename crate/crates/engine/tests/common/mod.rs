#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};

use minilab_core::domain::{CampaignSpec, Channel, Lead, SequenceStep, VariantArm};
use minilab_core::usage::UsageRecord;
use minilab_core::{ArmId, LeadId, Timestamp};
use minilab_engine::EngineDeps;
use minilab_gateway::{ChatClient, ChatRequest, ChatResponse, GatewayError, TransportError};

pub const DAY: u64 = 86_400;

pub fn spec_with_delays(delays: &[u64]) -> CampaignSpec {
    CampaignSpec {
        id: "camp-1".into(),
        name: "Test campaign".into(),
        value_proposition: "cut invoice processing time in half".into(),
        pain_points: vec!["manual data entry".into()],
        research_goals: vec!["recent funding".into()],
        outreach_instructions: "Be concise and specific.".into(),
        steps: delays
            .iter()
            .enumerate()
            .map(|(i, &d)| SequenceStep {
                index: i as u32,
                channel: if i % 2 == 0 { Channel::Email } else { Channel::Linkedin },
                delay: d,
                instructions: format!("touch {}", i + 1),
            })
            .collect(),
        variant_arms: vec![
            VariantArm { arm_id: "a".into(), backend_name: "teacher".into(), weight: 0.5 },
            VariantArm { arm_id: "b".into(), backend_name: "student".into(), weight: 0.5 },
        ],
    }
}

pub fn lead(id: &str, arm: &str) -> Lead {
    let mut profile = BTreeMap::new();
    profile.insert("name".into(), format!("Name of {id}"));
    Lead { id: LeadId::from(id), profile, arm_id: ArmId::from(arm) }
}

/// Returns a fixed text (or a counter-suffixed one) and records every prompt it saw.
pub struct Scripted {
    pub text: String,
    pub numbered: bool,
    pub calls: AtomicU32,
    pub prompts: Mutex<Vec<ChatRequest>>,
    /// Calls with these (1-based) numbers fail with HTTP 503.
    pub fail_calls: Vec<u32>,
    pub fail_all: bool,
}

impl Scripted {
    pub fn fixed(text: &str) -> Arc<Self> {
        Arc::new(Self { text: text.into(), numbered: false, calls: AtomicU32::new(0), prompts: Mutex::new(vec![]), fail_calls: vec![], fail_all: false })
    }

    pub fn numbered() -> Arc<Self> {
        Arc::new(Self { text: "draft".into(), numbered: true, calls: AtomicU32::new(0), prompts: Mutex::new(vec![]), fail_calls: vec![], fail_all: false })
    }

    pub fn failing() -> Arc<Self> {
        Arc::new(Self { text: String::new(), numbered: false, calls: AtomicU32::new(0), prompts: Mutex::new(vec![]), fail_calls: vec![], fail_all: true })
    }

    pub fn failing_on(calls: &[u32]) -> Arc<Self> {
        Arc::new(Self { text: "ok".into(), numbered: true, calls: AtomicU32::new(0), prompts: Mutex::new(vec![]), fail_calls: calls.to_vec(), fail_all: false })
    }
}

impl ChatClient for Scripted {
    fn complete(&self, backend: &str, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        self.prompts.lock().unwrap().push(request.clone());
        if self.fail_all || self.fail_calls.contains(&n) {
            return Err(GatewayError::ExhaustedRetries {
                backend: backend.into(),
                attempts: 3,
                last: TransportError::Status { status: 503, body: String::new() },
            });
        }
        let text = if self.numbered { format!("{} {n}", self.text) } else { self.text.clone() };
        Ok(ChatResponse { text, usage: UsageRecord::new(backend, 1000, 200, Timestamp(0)), attempts: 1 })
    }
}

pub fn deps(client: Arc<Scripted>) -> EngineDeps {
    EngineDeps::new(client)
}
