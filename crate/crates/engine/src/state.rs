use std::collections::{BTreeMap, BTreeSet};

use minilab_core::domain::{
    AgentMemory, CampaignSpec, Direction, EngagementEvent, EventKind, Lead, MessageRecord, ResearchDossier,
};
use minilab_core::usage::{LedgerEntry, UsagePurpose, UsageRecord};
use minilab_core::{ArmId, LeadId, MessageId, Timestamp};
use serde::{Deserialize, Serialize};

use crate::error::EngineError;

/// Failed sends back off 30 s, 60 s, 120 s, ... and give up after this many attempts.
pub const MAX_SEND_ATTEMPTS: u32 = 5;
pub const RETRY_BASE_SECS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cursor {
    /// Index of the next step to send.
    Step(u32),
    Done,
    PausedForReply,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadState {
    pub lead: Lead,
    pub memory: AgentMemory,
    pub cursor: Cursor,
    /// Due instant of the next step; present only while the cursor is a step index.
    pub next_due: Option<Timestamp>,
    /// Due instant of the pending reply; present only while paused for a reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_due: Option<Timestamp>,
    #[serde(default)]
    pub failed_attempts: u32,
    #[serde(default)]
    pub unsubscribed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub research_error: Option<String>,
}

impl LeadState {
    pub fn due(&self) -> Option<Timestamp> {
        match self.cursor {
            Cursor::Step(_) => self.next_due,
            Cursor::PausedForReply => self.reply_due,
            Cursor::Done | Cursor::Failed => None,
        }
    }

    pub fn last_message_at(&self) -> Option<Timestamp> {
        let out = self.memory.history.last().map(|m| m.timestamp);
        let inb = self.memory.inbound.last().map(|m| m.timestamp);
        out.max(inb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DraftStatus {
    Ready { body: String, usage: UsageRecord },
    Pending { error: String },
}

/// Campaign-level template message generated per arm at creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDraft {
    pub arm_id: ArmId,
    pub backend_name: String,
    #[serde(flatten)]
    pub status: DraftStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SendKind {
    Step,
    Reply,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum ActionKind {
    SendStep(u32),
    SendReply,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledAction {
    pub lead_id: LeadId,
    #[serde(flatten)]
    pub kind: ActionKind,
    pub due: Timestamp,
}

/// One journal line. Records carry every gateway result, so applying them never calls out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Created { spec: CampaignSpec, at: Timestamp, drafts: Vec<InitialDraft> },
    DraftRetried { draft: InitialDraft },
    LeadAdded { lead: Lead, at: Timestamp, dossier: Option<ResearchDossier>, research_error: Option<String> },
    Sent { lead_id: LeadId, kind: SendKind, message: MessageRecord },
    SendFailed { lead_id: LeadId, kind: SendKind, at: Timestamp, error: String },
    Event { event: EngagementEvent },
    ArmPaused { arm_id: ArmId },
    ArmResumed { arm_id: ArmId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub spec: CampaignSpec,
    pub created_at: Timestamp,
    pub initial_drafts: Vec<InitialDraft>,
    pub leads: BTreeMap<LeadId, LeadState>,
    /// Idempotent event store, in ingestion order.
    pub events: Vec<EngagementEvent>,
    pub paused_arms: BTreeSet<ArmId>,
    #[serde(skip)]
    seen_events: BTreeSet<(LeadId, EventKind, MessageId)>,
    #[serde(skip)]
    due_index: BTreeSet<(Timestamp, LeadId)>,
}

impl CampaignState {
    pub fn from_created(record: &LogRecord) -> Result<Self, EngineError> {
        let LogRecord::Created { spec, at, drafts } = record else {
            return Err(EngineError::Corrupt("log must start with a created record".into()));
        };
        Ok(Self {
            spec: spec.clone(),
            created_at: *at,
            initial_drafts: drafts.clone(),
            leads: BTreeMap::new(),
            events: Vec::new(),
            paused_arms: BTreeSet::new(),
            seen_events: BTreeSet::new(),
            due_index: BTreeSet::new(),
        })
    }

    /// Rebuilds the skipped indexes after deserializing a snapshot.
    pub fn reindex(&mut self) {
        self.seen_events = self.events.iter().filter_map(|e| e.dedup_key()).collect();
        self.due_index = self.leads.iter().filter_map(|(id, l)| l.due().map(|d| (d, id.clone()))).collect();
    }

    pub fn lead(&self, id: &LeadId) -> Result<&LeadState, EngineError> {
        self.leads.get(id).ok_or_else(|| EngineError::UnknownLead(id.clone()))
    }

    pub fn is_duplicate(&self, event: &EngagementEvent) -> bool {
        event.dedup_key().is_some_and(|k| self.seen_events.contains(&k))
    }

    /// Leads with work due at or before `now`, earliest first, excluding paused arms.
    pub fn due_leads(&self, now: Timestamp) -> Vec<LeadId> {
        self.due_index
            .iter()
            .take_while(|(due, _)| *due <= now)
            .filter(|(_, id)| !self.paused_arms.contains(&self.leads[id].lead.arm_id))
            .map(|(_, id)| id.clone())
            .collect()
    }

    /// Earliest pending action instant on an unpaused arm.
    pub fn next_wakeup(&self) -> Option<Timestamp> {
        self.due_index
            .iter()
            .find(|(_, id)| !self.paused_arms.contains(&self.leads[id].lead.arm_id))
            .map(|(due, _)| *due)
    }

    pub fn pending_actions(&self) -> Vec<ScheduledAction> {
        self.due_index
            .iter()
            .map(|(due, id)| {
                let kind = match self.leads[id].cursor {
                    Cursor::Step(i) => ActionKind::SendStep(i),
                    _ => ActionKind::SendReply,
                };
                ScheduledAction { lead_id: id.clone(), kind, due: *due }
            })
            .collect()
    }

    pub fn all_finished(&self) -> bool {
        self.due_index.is_empty()
    }

    /// Every usage record held in state, tagged for cost aggregation.
    pub fn ledger_entries(&self) -> Vec<LedgerEntry> {
        let mut out = Vec::new();
        for d in &self.initial_drafts {
            if let DraftStatus::Ready { usage, .. } = &d.status {
                out.push(LedgerEntry { lead_id: None, purpose: UsagePurpose::InitialDraft, usage: usage.clone() });
            }
        }
        for (id, l) in &self.leads {
            if let Some(d) = &l.memory.research_dossier {
                out.push(LedgerEntry { lead_id: Some(id.clone()), purpose: UsagePurpose::Research, usage: d.usage.clone() });
            }
            for m in &l.memory.history {
                if let Some(u) = &m.usage {
                    let purpose = if m.step_index.is_some() { UsagePurpose::Draft } else { UsagePurpose::Reply };
                    out.push(LedgerEntry { lead_id: Some(id.clone()), purpose, usage: u.clone() });
                }
            }
        }
        out
    }

    pub fn apply(&mut self, record: &LogRecord) -> Result<(), EngineError> {
        match record {
            LogRecord::Created { .. } => Err(EngineError::Corrupt("duplicate created record".into())),
            LogRecord::DraftRetried { draft } => {
                let slot = self
                    .initial_drafts
                    .iter_mut()
                    .find(|d| d.arm_id == draft.arm_id)
                    .ok_or_else(|| EngineError::UnknownArm(draft.arm_id.clone()))?;
                *slot = draft.clone();
                Ok(())
            }
            LogRecord::LeadAdded { lead, at, dossier, research_error } => {
                if self.leads.contains_key(&lead.id) {
                    return Err(EngineError::DuplicateLead(lead.id.clone()));
                }
                let first = self.spec.steps.first().ok_or_else(|| EngineError::Corrupt("campaign has no steps".into()))?;
                let mut memory = AgentMemory::new(lead.id.clone());
                memory.research_dossier = dossier.clone();
                let state = LeadState {
                    lead: lead.clone(),
                    memory,
                    cursor: Cursor::Step(0),
                    next_due: Some(at.plus_secs(first.delay)),
                    reply_due: None,
                    failed_attempts: 0,
                    unsubscribed: false,
                    research_error: research_error.clone(),
                };
                self.insert_lead(state);
                Ok(())
            }
            LogRecord::Sent { lead_id, kind, message } => {
                let steps = self.spec.steps.clone();
                self.update_lead(lead_id, |l| {
                    l.memory.push_outbound(message.clone())?;
                    l.failed_attempts = 0;
                    let next = match kind {
                        SendKind::Step => message.step_index.map(|i| i + 1).unwrap_or(0),
                        SendKind::Reply => {
                            l.reply_due = None;
                            l.memory.steps_sent()
                        }
                    };
                    match steps.get(next as usize) {
                        Some(step) if !l.unsubscribed => {
                            l.cursor = Cursor::Step(next);
                            l.next_due = Some(message.timestamp.plus_secs(step.delay));
                        }
                        _ => {
                            l.cursor = Cursor::Done;
                            l.next_due = None;
                        }
                    }
                    Ok(())
                })
            }
            LogRecord::SendFailed { lead_id, kind, at, .. } => self.update_lead(lead_id, |l| {
                l.failed_attempts += 1;
                if l.failed_attempts >= MAX_SEND_ATTEMPTS {
                    l.cursor = Cursor::Failed;
                    l.next_due = None;
                    l.reply_due = None;
                    return Ok(());
                }
                let retry_at = at.plus_secs(RETRY_BASE_SECS << (l.failed_attempts - 1));
                match kind {
                    SendKind::Step => l.next_due = Some(retry_at),
                    SendKind::Reply => l.reply_due = Some(retry_at),
                }
                Ok(())
            }),
            LogRecord::Event { event } => {
                if self.is_duplicate(event) {
                    return Ok(());
                }
                let steps_known = self.spec.steps.clone();
                self.update_lead(&event.lead_id, |l| {
                    match event.kind {
                        EventKind::Reply => {
                            let original = l.memory.find(&event.message_ref).map(|m| m.channel);
                            let seq = l.memory.next_seq();
                            l.memory.push_inbound(MessageRecord {
                                id: format!("{}/{}", l.lead.id, seq).into(),
                                seq,
                                direction: Direction::Inbound,
                                channel: original.unwrap_or(steps_known[0].channel),
                                step_index: None,
                                subject: None,
                                body: event.body.clone().unwrap_or_default(),
                                timestamp: event.timestamp,
                                model_backend: None,
                                usage: None,
                            })?;
                            if !l.unsubscribed && matches!(l.cursor, Cursor::Step(_) | Cursor::Done) {
                                l.cursor = Cursor::PausedForReply;
                                l.next_due = None;
                                l.reply_due = Some(event.timestamp);
                            }
                        }
                        EventKind::Unsubscribe => {
                            l.unsubscribed = true;
                            if l.cursor != Cursor::Failed {
                                l.cursor = Cursor::Done;
                            }
                            l.next_due = None;
                            l.reply_due = None;
                        }
                        EventKind::Delivered | EventKind::Open | EventKind::Click => {}
                    }
                    Ok(())
                })?;
                if let Some(key) = event.dedup_key() {
                    self.seen_events.insert(key);
                }
                self.events.push(event.clone());
                Ok(())
            }
            LogRecord::ArmPaused { arm_id } => {
                self.check_arm(arm_id)?;
                self.paused_arms.insert(arm_id.clone());
                Ok(())
            }
            LogRecord::ArmResumed { arm_id } => {
                self.check_arm(arm_id)?;
                self.paused_arms.remove(arm_id);
                Ok(())
            }
        }
    }

    fn check_arm(&self, arm_id: &ArmId) -> Result<(), EngineError> {
        self.spec.arm(arm_id).map(|_| ()).ok_or_else(|| EngineError::UnknownArm(arm_id.clone()))
    }

    fn insert_lead(&mut self, state: LeadState) {
        if let Some(d) = state.due() {
            self.due_index.insert((d, state.lead.id.clone()));
        }
        self.leads.insert(state.lead.id.clone(), state);
    }

    /// Mutates one lead on a copy and commits only if `f` succeeds, keeping the due index in step.
    fn update_lead(&mut self, id: &LeadId, f: impl FnOnce(&mut LeadState) -> Result<(), EngineError>) -> Result<(), EngineError> {
        let current = self.leads.get(id).ok_or_else(|| EngineError::UnknownLead(id.clone()))?;
        let mut next = current.clone();
        f(&mut next)?;
        if let Some(d) = current.due() {
            self.due_index.remove(&(d, id.clone()));
        }
        if let Some(d) = next.due() {
            self.due_index.insert((d, id.clone()));
        }
        self.leads.insert(id.clone(), next);
        Ok(())
    }
}
