//! Journal checks that do not trust the state fold: they re-derive due
//! instants and unsubscribe points from the raw records.

use std::collections::BTreeMap;

use minilab_core::domain::{CampaignSpec, EngagementEvent, EventKind, Lead};
use minilab_core::{ArmId, LeadId, MessageId, Timestamp};
use serde::{Deserialize, Serialize};

use crate::campaign::{Campaign, EngineDeps};
use crate::error::EngineError;
use crate::state::{LogRecord, SendKind};

#[derive(Debug, Default)]
struct Seen {
    added_at: Option<Timestamp>,
    last_out: Option<Timestamp>,
    last_step: Option<u32>,
    unsubscribed: bool,
    sent: usize,
    replies_in: usize,
}

/// Violations of the scheduling contract found in `records`; empty when the log is sound.
pub fn audit_log(spec: &CampaignSpec, records: &[LogRecord]) -> Vec<String> {
    let mut leads: BTreeMap<LeadId, Seen> = BTreeMap::new();
    let mut bad = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match r {
            LogRecord::LeadAdded { lead, at, .. } => {
                leads.entry(lead.id.clone()).or_default().added_at = Some(*at);
            }
            LogRecord::Sent { lead_id, kind, message } => {
                let Some(s) = leads.get_mut(lead_id) else {
                    bad.push(format!("record {i}: send to unknown lead {lead_id}"));
                    continue;
                };
                s.sent += 1;
                if s.unsubscribed {
                    bad.push(format!("record {i}: {lead_id} sent {} after unsubscribing", message.id));
                }
                if let Some(last) = s.last_out {
                    if message.timestamp < last {
                        bad.push(format!("record {i}: {lead_id} send time went backwards"));
                    }
                }
                if *kind == SendKind::Step {
                    let Some(idx) = message.step_index else {
                        bad.push(format!("record {i}: step send without index"));
                        continue;
                    };
                    let expected = s.last_step.map_or(0, |p| p + 1);
                    if idx != expected {
                        bad.push(format!("record {i}: {lead_id} sent step {idx}, expected {expected}"));
                    }
                    let delay = spec.steps.get(idx as usize).map(|st| st.delay).unwrap_or(0);
                    let base = s.last_out.or(s.added_at).unwrap_or(Timestamp(i64::MIN));
                    let due = base.plus_secs(delay);
                    if message.timestamp < due {
                        bad.push(format!("record {i}: {lead_id} step {idx} sent at {} before due {}", message.timestamp, due));
                    }
                    s.last_step = Some(idx);
                } else if message.step_index.is_some() {
                    bad.push(format!("record {i}: reply carries a step index"));
                }
                s.last_out = Some(message.timestamp);
            }
            LogRecord::Event { event } => {
                let s = leads.entry(event.lead_id.clone()).or_default();
                match event.kind {
                    EventKind::Unsubscribe => s.unsubscribed = true,
                    EventKind::Reply => s.replies_in += 1,
                    _ => {}
                }
            }
            _ => {}
        }
    }
    bad
}

/// Memory completeness: each lead's history and inbound hold exactly the logged sends and replies.
pub fn audit_memory(campaign: &Campaign) -> Vec<String> {
    let mut sent: BTreeMap<&LeadId, Vec<&MessageId>> = BTreeMap::new();
    let mut replies: BTreeMap<&LeadId, usize> = BTreeMap::new();
    for r in campaign.log() {
        match r {
            LogRecord::Sent { lead_id, message, .. } => sent.entry(lead_id).or_default().push(&message.id),
            LogRecord::Event { event } if event.kind == EventKind::Reply => *replies.entry(&event.lead_id).or_default() += 1,
            _ => {}
        }
    }
    let mut bad = Vec::new();
    for (id, l) in &campaign.state().leads {
        let logged: Vec<&MessageId> = sent.get(id).cloned().unwrap_or_default();
        let held: Vec<&MessageId> = l.memory.history.iter().map(|m| &m.id).collect();
        if logged != held {
            bad.push(format!("{id}: history {held:?} differs from log {logged:?}"));
        }
        let n_in = replies.get(id).copied().unwrap_or(0);
        if l.memory.inbound.len() != n_in {
            bad.push(format!("{id}: {} inbound messages but {n_in} logged replies", l.memory.inbound.len()));
        }
        let mut ids: Vec<&MessageId> = l.memory.history.iter().chain(&l.memory.inbound).map(|m| &m.id).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != l.memory.history.len() + l.memory.inbound.len() {
            bad.push(format!("{id}: duplicate message ids in memory"));
        }
    }
    bad
}

/// One step of a scripted scenario. Lead and message choices are indexes, reduced modulo what exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraceOp {
    AddLead,
    Advance(u64),
    Event { lead: usize, message: usize, kind: EventKind },
    DraftReply { lead: usize },
    PauseArm(usize),
    ResumeArm(usize),
}

/// Runs `ops` against a fresh campaign. Operations the engine legitimately refuses
/// (say a reply draft for a lead that is not paused) are skipped.
pub fn run_trace(spec: CampaignSpec, start: Timestamp, ops: &[TraceOp], deps: EngineDeps) -> Result<Campaign, EngineError> {
    let mut c = Campaign::create(spec, start, deps, None)?;
    let mut now = start;
    let mut ids: Vec<LeadId> = Vec::new();
    let arms: Vec<ArmId> = c.spec().variant_arms.iter().map(|a| a.arm_id.clone()).collect();
    for op in ops {
        match op {
            TraceOp::AddLead => {
                let id = LeadId::from(format!("lead-{:03}", ids.len()));
                let arm_id = arms[ids.len() % arms.len()].clone();
                c.add_lead(Lead { id: id.clone(), profile: BTreeMap::new(), arm_id }, now)?;
                ids.push(id);
            }
            TraceOp::Advance(secs) => {
                now = now.plus_secs(*secs);
                c.tick(now)?;
            }
            TraceOp::Event { lead, message, kind } => {
                if ids.is_empty() {
                    continue;
                }
                let id = &ids[lead % ids.len()];
                let history = &c.lead(id)?.memory.history;
                if history.is_empty() {
                    continue;
                }
                let m = &history[message % history.len()];
                let mut ev = EngagementEvent::new(id.clone(), *kind, now.max(m.timestamp), m.id.clone());
                if *kind == EventKind::Reply {
                    ev.body = Some(format!("reply at {}", ev.timestamp.0));
                }
                match c.ingest_event(ev) {
                    Ok(_) | Err(EngineError::ClockRegression { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            TraceOp::DraftReply { lead } => {
                if ids.is_empty() {
                    continue;
                }
                match c.draft_reply(&ids[lead % ids.len()], now) {
                    Ok(_) | Err(EngineError::WrongState { .. }) | Err(EngineError::ClockRegression { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            TraceOp::PauseArm(i) => c.pause_arm(&arms[i % arms.len()])?,
            TraceOp::ResumeArm(i) => c.resume_arm(&arms[i % arms.len()])?,
        }
    }
    Ok(c)
}
