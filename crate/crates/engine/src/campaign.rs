use std::path::Path;
use std::sync::Arc;

use minilab_core::domain::{validate_campaign_spec, CampaignSpec, Direction, EngagementEvent, EventKind, Lead, MessageRecord};
use minilab_core::usage::UsagePurpose;
use minilab_core::{ArmId, LeadId, Timestamp};
use minilab_gateway::research::Researcher;
use minilab_gateway::{ChatClient, ChatMessage, ChatRequest};

use crate::error::EngineError;
use crate::journal::{read_log, Journal};
use crate::prompt::{build_prompt, split_subject, PromptKind};
use crate::state::{CampaignState, Cursor, DraftStatus, InitialDraft, LeadState, LogRecord, ScheduledAction, SendKind};

/// Services a campaign calls out to. Research is optional; without it leads start with no dossier.
#[derive(Clone)]
pub struct EngineDeps {
    pub client: Arc<dyn ChatClient>,
    pub researcher: Option<Arc<dyn Researcher>>,
}

impl EngineDeps {
    pub fn new(client: Arc<dyn ChatClient>) -> Self {
        Self { client, researcher: None }
    }

    pub fn with_researcher(mut self, researcher: Arc<dyn Researcher>) -> Self {
        self.researcher = Some(researcher);
        self
    }
}

impl std::fmt::Debug for EngineDeps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EngineDeps").field("researcher", &self.researcher.is_some()).finish_non_exhaustive()
    }
}

/// One campaign: state, its collaborators, and an optional journal. Not internally synchronized;
/// callers serialize access (one writer per campaign).
pub struct Campaign {
    state: CampaignState,
    deps: EngineDeps,
    journal: Option<Journal>,
    log: Vec<LogRecord>,
}

impl std::fmt::Debug for Campaign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Campaign").field("id", &self.state.spec.id).field("leads", &self.state.leads.len()).finish()
    }
}

fn initial_draft_request(spec: &CampaignSpec) -> ChatRequest {
    let first = &spec.steps[0];
    let mut ctx = format!("Value proposition: {}\n", spec.value_proposition);
    for p in &spec.pain_points {
        ctx.push_str(&format!("- {p}\n"));
    }
    ChatRequest::new(vec![
        ChatMessage::system(format!(
            "{}\n\nStep 1 instructions: {}\nWrite a reusable template message for this campaign ({} channel), using {{name}} and {{company}} placeholders.",
            spec.outreach_instructions.trim(),
            first.instructions,
            first.channel
        )),
        ChatMessage::user(ctx),
    ])
    .tagged(None, UsagePurpose::InitialDraft)
}

impl Campaign {
    /// Validates the spec and generates one initial draft per arm. A gateway failure leaves that draft pending.
    pub fn create(spec: CampaignSpec, now: Timestamp, deps: EngineDeps, journal: Option<Journal>) -> Result<Self, EngineError> {
        let report = validate_campaign_spec(&spec);
        if !report.is_valid() {
            return Err(EngineError::InvalidSpec(report));
        }
        let request = initial_draft_request(&spec);
        let drafts = spec.variant_arms.iter().map(|arm| draft_for(&*deps.client, &arm.arm_id, &arm.backend_name, &request)).collect();
        let created = LogRecord::Created { spec, at: now, drafts };
        let state = CampaignState::from_created(&created)?;
        let mut c = Self { state, deps, journal, log: Vec::new() };
        c.persist(&created)?;
        Ok(c)
    }

    /// Rebuilds a campaign by folding its log; no gateway calls are made.
    pub fn replay(records: &[LogRecord], deps: EngineDeps) -> Result<Self, EngineError> {
        let (first, rest) = records.split_first().ok_or_else(|| EngineError::Corrupt("empty log".into()))?;
        let mut state = CampaignState::from_created(first)?;
        for r in rest {
            state.apply(r)?;
        }
        Ok(Self { state, deps, journal: None, log: records.to_vec() })
    }

    /// Replays a journal file and keeps appending to it.
    pub fn open(path: &Path, deps: EngineDeps) -> Result<Self, EngineError> {
        let records: Vec<LogRecord> = read_log(path)?;
        let mut c = Self::replay(&records, deps)?;
        c.journal = Some(Journal::open(path)?);
        Ok(c)
    }

    pub fn state(&self) -> &CampaignState {
        &self.state
    }

    pub fn spec(&self) -> &CampaignSpec {
        &self.state.spec
    }

    /// Records committed through this handle (including replayed ones).
    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    fn persist(&mut self, record: &LogRecord) -> Result<(), EngineError> {
        if let Some(j) = &mut self.journal {
            j.append(record)?;
        }
        self.log.push(record.clone());
        Ok(())
    }

    fn commit(&mut self, record: LogRecord) -> Result<(), EngineError> {
        self.state.apply(&record)?;
        self.persist(&record)
    }

    /// Researches the lead, stores the dossier and schedules step 0.
    pub fn add_lead(&mut self, lead: Lead, now: Timestamp) -> Result<ScheduledAction, EngineError> {
        if self.state.leads.contains_key(&lead.id) {
            return Err(EngineError::DuplicateLead(lead.id));
        }
        if self.state.spec.arm(&lead.arm_id).is_none() {
            return Err(EngineError::UnknownArm(lead.arm_id));
        }
        let (dossier, research_error) = match &self.deps.researcher {
            Some(r) => match r.research(&lead, &self.state.spec.research_goals, now) {
                Ok(d) => (Some(d), None),
                Err(e) => (None, Some(format!("{}: {e}", e.code()))),
            },
            None => (None, None),
        };
        let id = lead.id.clone();
        self.commit(LogRecord::LeadAdded { lead, at: now, dossier, research_error })?;
        let l = &self.state.leads[&id];
        Ok(ScheduledAction { lead_id: id, kind: crate::state::ActionKind::SendStep(0), due: l.next_due.expect("new lead is scheduled") })
    }

    /// Sends everything due at or before `now`, in due order. A lead can send several times in one tick
    /// when follow-on steps have zero delay.
    pub fn tick(&mut self, now: Timestamp) -> Result<Vec<MessageRecord>, EngineError> {
        self.retry_pending_drafts();
        let mut sent = Vec::new();
        for id in self.state.due_leads(now) {
            loop {
                let l = &self.state.leads[&id];
                if l.due().is_none_or(|d| d > now) || l.last_message_at().is_some_and(|t| t > now) {
                    break;
                }
                match l.cursor {
                    Cursor::Step(_) => {
                        if let Some(m) = self.send(&id, SendKind::Step, now)? {
                            sent.push(m);
                        }
                    }
                    Cursor::PausedForReply => {
                        if let Some(m) = self.send(&id, SendKind::Reply, now)? {
                            sent.push(m);
                        }
                    }
                    Cursor::Done | Cursor::Failed => break,
                }
            }
        }
        Ok(sent)
    }

    /// Answers the pending reply for one lead right away, then resumes its sequence.
    pub fn draft_reply(&mut self, lead_id: &LeadId, now: Timestamp) -> Result<MessageRecord, EngineError> {
        let l = self.state.lead(lead_id)?;
        if l.cursor != Cursor::PausedForReply {
            return Err(EngineError::WrongState { lead: lead_id.clone(), cursor: l.cursor, needed: "paused_for_reply" });
        }
        if let Some(last) = l.last_message_at().filter(|t| *t > now) {
            return Err(EngineError::ClockRegression { at: now, last });
        }
        match self.send(lead_id, SendKind::Reply, now)? {
            Some(m) => Ok(m),
            None => Err(EngineError::WrongState { lead: lead_id.clone(), cursor: self.state.leads[lead_id].cursor, needed: "a successful draft" }),
        }
    }

    /// Drafts and records one message; a gateway failure is recorded as a retry and returns `None`.
    fn send(&mut self, id: &LeadId, kind: SendKind, now: Timestamp) -> Result<Option<MessageRecord>, EngineError> {
        let l = &self.state.leads[id];
        let spec = &self.state.spec;
        let (request, step) = match (kind, l.cursor) {
            (SendKind::Step, Cursor::Step(i)) => {
                let step = spec.step(i).ok_or_else(|| EngineError::Corrupt(format!("cursor {i} past last step")))?;
                (build_prompt(spec, l, PromptKind::Step(step)).tagged(Some(id.clone()), UsagePurpose::Draft), Some(step))
            }
            (SendKind::Reply, Cursor::PausedForReply) => {
                (build_prompt(spec, l, PromptKind::Reply).tagged(Some(id.clone()), UsagePurpose::Reply), None)
            }
            (_, cursor) => return Err(EngineError::WrongState { lead: id.clone(), cursor, needed: "a pending send" }),
        };
        let backend = spec.arm(&l.lead.arm_id).ok_or_else(|| EngineError::UnknownArm(l.lead.arm_id.clone()))?.backend_name.clone();
        let channel = step.map(|s| s.channel).unwrap_or_else(|| l.memory.inbound.last().map(|m| m.channel).unwrap_or(spec.steps[0].channel));
        let step_index = step.map(|s| s.index);
        let seq = l.memory.next_seq();
        match self.deps.client.complete(&backend, &request) {
            Ok(resp) => {
                let (subject, body) = split_subject(channel, &resp.text);
                let mut usage = resp.usage;
                usage.timestamp = now;
                let message = MessageRecord {
                    id: format!("{id}/{seq}").into(),
                    seq,
                    direction: Direction::Outbound,
                    channel,
                    step_index,
                    subject,
                    body,
                    timestamp: now,
                    model_backend: Some(backend),
                    usage: Some(usage),
                };
                self.commit(LogRecord::Sent { lead_id: id.clone(), kind, message: message.clone() })?;
                Ok(Some(message))
            }
            Err(e) => {
                self.commit(LogRecord::SendFailed { lead_id: id.clone(), kind, at: now, error: format!("{}: {e}", e.code()) })?;
                Ok(None)
            }
        }
    }

    /// Stores an engagement event. Returns `false` when it duplicates one already stored.
    pub fn ingest_event(&mut self, event: EngagementEvent) -> Result<bool, EngineError> {
        let l = self.state.lead(&event.lead_id)?;
        let known = l.memory.find(&event.message_ref).is_some_and(|m| m.direction == Direction::Outbound);
        if !known {
            return Err(EngineError::UnknownMessage { lead: event.lead_id.clone(), message: event.message_ref.clone() });
        }
        if self.state.is_duplicate(&event) {
            return Ok(false);
        }
        if event.kind == EventKind::Reply {
            if let Some(last) = l.memory.inbound.last().map(|m| m.timestamp).filter(|t| *t > event.timestamp) {
                return Err(EngineError::ClockRegression { at: event.timestamp, last });
            }
        }
        self.commit(LogRecord::Event { event })?;
        Ok(true)
    }

    pub fn pause_arm(&mut self, arm_id: &ArmId) -> Result<(), EngineError> {
        self.commit(LogRecord::ArmPaused { arm_id: arm_id.clone() })
    }

    pub fn resume_arm(&mut self, arm_id: &ArmId) -> Result<(), EngineError> {
        self.commit(LogRecord::ArmResumed { arm_id: arm_id.clone() })
    }

    pub fn lead(&self, id: &LeadId) -> Result<&LeadState, EngineError> {
        self.state.lead(id)
    }

    fn retry_pending_drafts(&mut self) {
        let pending: Vec<InitialDraft> =
            self.state.initial_drafts.iter().filter(|d| matches!(d.status, DraftStatus::Pending { .. })).cloned().collect();
        if pending.is_empty() {
            return;
        }
        let request = initial_draft_request(&self.state.spec);
        for d in pending {
            let draft = draft_for(&*self.deps.client, &d.arm_id, &d.backend_name, &request);
            if matches!(draft.status, DraftStatus::Ready { .. }) {
                // Pending drafts never block sends; a journal failure here surfaces on the next commit.
                let _ = self.commit(LogRecord::DraftRetried { draft });
            }
        }
    }
}

fn draft_for(client: &dyn ChatClient, arm_id: &ArmId, backend: &str, request: &ChatRequest) -> InitialDraft {
    let status = match client.complete(backend, request) {
        Ok(r) => DraftStatus::Ready { body: r.text, usage: r.usage },
        Err(e) => DraftStatus::Pending { error: format!("{}: {e}", e.code()) },
    };
    InitialDraft { arm_id: arm_id.clone(), backend_name: backend.to_owned(), status }
}
