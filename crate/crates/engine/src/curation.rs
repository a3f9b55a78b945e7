//! Teacher-output review: generation jobs fan out to a backend, reviewers
//! accept, edit or reject each candidate once, and accepted outputs become
//! gold instruction/input/output pairs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use minilab_core::usage::{UsagePurpose, UsageRecord};
use minilab_core::{CampaignId, CandidateId, JobId, Timestamp};
use minilab_gateway::{ChatClient, ChatMessage, ChatRequest};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::journal::{read_log, Journal, JournalError};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("n_candidates must be at least 1")]
    InvalidCount,
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),
    #[error("unknown candidate {0}")]
    UnknownCandidate(CandidateId),
    #[error("unknown job {0}")]
    UnknownJob(JobId),
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("candidate {candidate} was already decided")]
    AlreadyDecided { candidate: CandidateId, stored: Box<ReviewDecision> },
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("corrupt curation log: {0}")]
    Corrupt(String),
}

impl CurationError {
    pub fn code(&self) -> &'static str {
        match self {
            CurationError::InvalidCount => "INVALID_COUNT",
            CurationError::UnknownBackend(_) => "UNKNOWN_BACKEND",
            CurationError::UnknownCandidate(_) => "UNKNOWN_CANDIDATE",
            CurationError::UnknownJob(_) => "UNKNOWN_JOB",
            CurationError::InvalidDecision(_) => "INVALID_DECISION",
            CurationError::AlreadyDecided { .. } => "ALREADY_DECIDED",
            CurationError::Journal(_) => "JOURNAL_ERROR",
            CurationError::Corrupt(_) => "CORRUPT_LOG",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campaign_id: Option<CampaignId>,
    pub value_proposition: String,
    #[serde(default)]
    pub pain_points: Vec<String>,
    #[serde(default)]
    pub research_goals: Vec<String>,
    #[serde(default)]
    pub dossier_excerpt: String,
    pub instructions: String,
}

impl PromptContext {
    /// The gold pair's `instruction` field and the teacher's system prompt.
    pub fn instruction(&self) -> String {
        format!(
            "{}\n\nWrite a personalized cold outreach email for the prospect described in the input. \
             Start with a 'Subject:' line.",
            self.instructions.trim()
        )
    }

    /// The gold pair's `input` field and the teacher's user message.
    pub fn input(&self) -> String {
        let mut s = format!("Value proposition: {}\n", self.value_proposition);
        let mut list = |title: &str, items: &[String]| {
            if !items.is_empty() {
                s.push_str(title);
                for i in items {
                    s.push_str(&format!("- {i}\n"));
                }
            }
        };
        list("Pain points:\n", &self.pain_points);
        list("Research goals:\n", &self.research_goals);
        if !self.dossier_excerpt.trim().is_empty() {
            s.push_str(&format!("Research dossier:\n{}\n", self.dossier_excerpt.trim()));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Generated,
    Reviewed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub index: u32,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub id: JobId,
    pub prompt_context: PromptContext,
    pub teacher_backend: String,
    pub n_candidates: u32,
    pub status: JobStatus,
    pub candidate_ids: Vec<CandidateId>,
    pub failures: Vec<GenerationFailure>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    AcceptWithEdit,
    Reject,
}

impl Verdict {
    pub fn accepted(self) -> bool {
        !matches!(self, Verdict::Reject)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub reviewer_id: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_text: Option<String>,
    pub quality: u8,
    pub relevance: u8,
    pub accuracy: u8,
    pub decided_at: Timestamp,
    pub version: u32,
}

impl ReviewDecision {
    pub fn validate(&self) -> Result<(), CurationError> {
        let bad = |m: &str| Err(CurationError::InvalidDecision(m.to_owned()));
        if self.version != 1 {
            return bad("version must be 1");
        }
        if self.reviewer_id.trim().is_empty() {
            return bad("reviewer_id is required");
        }
        for r in [self.quality, self.relevance, self.accuracy] {
            if !(1..=5).contains(&r) {
                return bad("ratings must be between 1 and 5");
            }
        }
        match (self.verdict, &self.edited_text) {
            (Verdict::AcceptWithEdit, Some(t)) if !t.trim().is_empty() => Ok(()),
            (Verdict::AcceptWithEdit, _) => bad("accept_with_edit requires edited_text"),
            (_, Some(_)) => bad("edited_text is only allowed with accept_with_edit"),
            (_, None) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: CandidateId,
    pub job_id: JobId,
    pub text: String,
    pub usage: UsageRecord,
    pub decision: Option<ReviewDecision>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldMeta {
    pub teacher_backend: String,
    pub reviewer_id: String,
    pub job_id: String,
    /// RFC 3339, UTC.
    pub decided_at: String,
    pub candidate_id: String,
    pub edited: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campaign_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPair {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub meta: GoldMeta,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFilter {
    #[serde(default)]
    pub campaign_id: Option<CampaignId>,
    #[serde(default)]
    pub teacher_backend: Option<String>,
    /// Inclusive lower bound on the decision time.
    #[serde(default)]
    pub decided_from: Option<Timestamp>,
    /// Exclusive upper bound on the decision time.
    #[serde(default)]
    pub decided_until: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub count: u64,
    pub reviewers: BTreeMap<String, u64>,
    pub decided: u64,
    pub accepted: u64,
    pub rejected: u64,
    /// accepted / decided; absent when nothing was decided.
    pub accept_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldExport {
    pub jsonl: String,
    pub manifest: ExportManifest,
}

impl GoldExport {
    /// Writes `gold.jsonl` and `manifest.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("gold.jsonl"), &self.jsonl)?;
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), manifest + "\n")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    pub pending_review: u64,
    pub candidates: u64,
    pub decided: u64,
    pub accepted: u64,
    pub edited: u64,
    pub rejected: u64,
    pub per_reviewer: BTreeMap<String, u64>,
    pub mean_quality: f64,
    pub mean_relevance: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub candidate_id: CandidateId,
    pub job_id: JobId,
    pub teacher_backend: String,
    pub context: PromptContext,
    pub text: String,
    pub created_at: Timestamp,
}

/// (candidates, undecided, accepted including edits, rejected) read atomically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conservation {
    pub candidates: u64,
    pub undecided: u64,
    pub accepted: u64,
    pub rejected: u64,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.candidates == self.undecided + self.accepted + self.rejected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum CurationRecord {
    Job { job: GenerationJob, candidates: Vec<Candidate> },
    Decision { candidate_id: CandidateId, decision: ReviewDecision },
}

#[derive(Debug, Default)]
struct Inner {
    jobs: BTreeMap<JobId, GenerationJob>,
    candidates: BTreeMap<CandidateId, Candidate>,
    gold: BTreeMap<CandidateId, GoldPair>,
    next_job: u64,
    next_candidate: u64,
    journal: Option<Journal>,
}

impl Inner {
    fn apply(&mut self, record: &CurationRecord) -> Result<(), CurationError> {
        match record {
            CurationRecord::Job { job, candidates } => {
                self.next_job = self.next_job.max(seq_of(job.id.as_str()));
                for c in candidates {
                    self.next_candidate = self.next_candidate.max(seq_of(c.id.as_str()));
                    self.candidates.insert(c.id.clone(), c.clone());
                }
                self.jobs.insert(job.id.clone(), job.clone());
                Ok(())
            }
            CurationRecord::Decision { candidate_id, decision } => {
                let cand = self.candidates.get_mut(candidate_id).ok_or_else(|| CurationError::UnknownCandidate(candidate_id.clone()))?;
                if let Some(stored) = &cand.decision {
                    return Err(CurationError::AlreadyDecided { candidate: candidate_id.clone(), stored: Box::new(stored.clone()) });
                }
                cand.decision = Some(decision.clone());
                let cand = cand.clone();
                let job = self.jobs.get_mut(&cand.job_id).ok_or_else(|| CurationError::UnknownJob(cand.job_id.clone()))?;
                if job.candidate_ids.iter().all(|id| id == candidate_id || self.candidates[id].decision.is_some()) {
                    job.status = JobStatus::Reviewed;
                }
                if decision.verdict.accepted() {
                    let output = decision.edited_text.clone().unwrap_or_else(|| cand.text.clone());
                    let job = &self.jobs[&cand.job_id];
                    self.gold.insert(
                        candidate_id.clone(),
                        GoldPair {
                            instruction: job.prompt_context.instruction(),
                            input: job.prompt_context.input(),
                            output,
                            meta: GoldMeta {
                                teacher_backend: job.teacher_backend.clone(),
                                reviewer_id: decision.reviewer_id.clone(),
                                job_id: job.id.to_string(),
                                decided_at: decision.decided_at.to_rfc3339(),
                                candidate_id: candidate_id.to_string(),
                                edited: decision.verdict == Verdict::AcceptWithEdit,
                                campaign_id: job.prompt_context.campaign_id.as_ref().map(|c| c.to_string()),
                            },
                        },
                    );
                }
                Ok(())
            }
        }
    }

    fn commit(&mut self, record: CurationRecord) -> Result<(), CurationError> {
        if let Some(j) = &mut self.journal {
            j.append(&record)?;
        }
        self.apply(&record)
    }
}

fn seq_of(id: &str) -> u64 {
    id.rsplit('-').next().and_then(|n| n.parse().ok()).unwrap_or(0)
}

/// Thread-safe store. Generation runs outside the lock; decisions are a compare-and-set on "undecided".
pub struct CurationStore {
    client: Arc<dyn ChatClient>,
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for CurationStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let g = self.inner.lock();
        f.debug_struct("CurationStore").field("jobs", &g.jobs.len()).field("candidates", &g.candidates.len()).finish()
    }
}

impl CurationStore {
    pub fn new(client: Arc<dyn ChatClient>) -> Self {
        Self { client, inner: Mutex::new(Inner::default()) }
    }

    /// Replays `path` if it exists and appends every later change to it.
    pub fn open(path: &Path, client: Arc<dyn ChatClient>) -> Result<Self, CurationError> {
        let mut inner = Inner::default();
        if path.exists() {
            for r in read_log::<CurationRecord>(path)? {
                inner.apply(&r).map_err(|e| CurationError::Corrupt(e.to_string()))?;
            }
        }
        inner.journal = Some(Journal::open(path)?);
        Ok(Self { client, inner: Mutex::new(inner) })
    }

    /// Calls the teacher `n` times. Failed calls are recorded on the job; the job exists regardless.
    pub fn enqueue_job(&self, context: PromptContext, teacher_backend: &str, n: u32, now: Timestamp) -> Result<GenerationJob, CurationError> {
        if n == 0 {
            return Err(CurationError::InvalidCount);
        }
        if !self.client.knows_backend(teacher_backend) {
            return Err(CurationError::UnknownBackend(teacher_backend.to_owned()));
        }
        let (job_id, first_cand) = {
            let mut g = self.inner.lock();
            g.next_job += 1;
            let first = g.next_candidate + 1;
            g.next_candidate += n as u64;
            (JobId::from(format!("job-{:06}", g.next_job)), first)
        };
        let request = ChatRequest::new(vec![ChatMessage::system(context.instruction()), ChatMessage::user(context.input())])
            .tagged(None, UsagePurpose::Curation);
        let mut candidates = Vec::new();
        let mut failures = Vec::new();
        for i in 0..n {
            match self.client.complete(teacher_backend, &request) {
                Ok(resp) => candidates.push(Candidate {
                    id: CandidateId::from(format!("cand-{:06}", first_cand + i as u64)),
                    job_id: job_id.clone(),
                    text: resp.text,
                    usage: resp.usage,
                    decision: None,
                    created_at: now,
                }),
                Err(e) => failures.push(GenerationFailure { index: i, code: e.code().to_owned(), message: e.to_string() }),
            }
        }
        let job = GenerationJob {
            id: job_id,
            prompt_context: context,
            teacher_backend: teacher_backend.to_owned(),
            n_candidates: n,
            status: JobStatus::Generated,
            candidate_ids: candidates.iter().map(|c| c.id.clone()).collect(),
            failures,
            created_at: now,
        };
        self.inner.lock().commit(CurationRecord::Job { job: job.clone(), candidates })?;
        Ok(job)
    }

    /// First decision wins; later submissions get `ALREADY_DECIDED` carrying the stored decision.
    pub fn submit_decision(&self, candidate_id: &CandidateId, decision: ReviewDecision) -> Result<Candidate, CurationError> {
        decision.validate()?;
        let mut g = self.inner.lock();
        let cand = g.candidates.get(candidate_id).ok_or_else(|| CurationError::UnknownCandidate(candidate_id.clone()))?;
        if let Some(stored) = &cand.decision {
            return Err(CurationError::AlreadyDecided { candidate: candidate_id.clone(), stored: Box::new(stored.clone()) });
        }
        if decision.verdict == Verdict::Accept && cand.text.trim().is_empty() {
            return Err(CurationError::InvalidDecision("cannot accept an empty candidate; edit it instead".into()));
        }
        g.commit(CurationRecord::Decision { candidate_id: candidate_id.clone(), decision })?;
        Ok(g.candidates[candidate_id].clone())
    }

    pub fn candidate(&self, id: &CandidateId) -> Option<Candidate> {
        self.inner.lock().candidates.get(id).cloned()
    }

    pub fn job(&self, id: &JobId) -> Option<GenerationJob> {
        self.inner.lock().jobs.get(id).cloned()
    }

    pub fn candidates(&self) -> Vec<Candidate> {
        self.inner.lock().candidates.values().cloned().collect()
    }

    pub fn gold_pairs(&self) -> Vec<GoldPair> {
        self.inner.lock().gold.values().cloned().collect()
    }

    /// Undecided candidates, oldest first.
    pub fn review_queue(&self, limit: usize) -> Vec<QueueItem> {
        let g = self.inner.lock();
        let mut pending: Vec<&Candidate> = g.candidates.values().filter(|c| c.decision.is_none()).collect();
        pending.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        pending
            .into_iter()
            .take(limit)
            .map(|c| {
                let job = &g.jobs[&c.job_id];
                QueueItem {
                    candidate_id: c.id.clone(),
                    job_id: c.job_id.clone(),
                    teacher_backend: job.teacher_backend.clone(),
                    context: job.prompt_context.clone(),
                    text: c.text.clone(),
                    created_at: c.created_at,
                }
            })
            .collect()
    }

    pub fn conservation(&self) -> Conservation {
        let g = self.inner.lock();
        let mut c = Conservation { candidates: g.candidates.len() as u64, undecided: 0, accepted: 0, rejected: 0 };
        for cand in g.candidates.values() {
            match cand.decision.as_ref().map(|d| d.verdict) {
                None => c.undecided += 1,
                Some(v) if v.accepted() => c.accepted += 1,
                Some(_) => c.rejected += 1,
            }
        }
        c
    }

    pub fn queue_stats(&self) -> QueueStats {
        let g = self.inner.lock();
        let mut s = QueueStats { candidates: g.candidates.len() as u64, ..Default::default() };
        let (mut q, mut r, mut a) = (0u64, 0u64, 0u64);
        for d in g.candidates.values().filter_map(|c| c.decision.as_ref()) {
            s.decided += 1;
            match d.verdict {
                Verdict::Accept => s.accepted += 1,
                Verdict::AcceptWithEdit => {
                    s.accepted += 1;
                    s.edited += 1;
                }
                Verdict::Reject => s.rejected += 1,
            }
            *s.per_reviewer.entry(d.reviewer_id.clone()).or_default() += 1;
            q += d.quality as u64;
            r += d.relevance as u64;
            a += d.accuracy as u64;
        }
        s.pending_review = s.candidates - s.decided;
        if s.decided > 0 {
            let n = s.decided as f64;
            (s.mean_quality, s.mean_relevance, s.mean_accuracy) = (q as f64 / n, r as f64 / n, a as f64 / n);
        }
        s
    }

    /// Gold pairs matching `filter`, one JSON object per line, ordered by decision time then candidate id.
    pub fn export_gold(&self, filter: &ExportFilter) -> GoldExport {
        let g = self.inner.lock();
        let mut rows: Vec<(Timestamp, &CandidateId, &ReviewDecision)> = Vec::new();
        for c in g.candidates.values() {
            let Some(d) = &c.decision else { continue };
            let job = &g.jobs[&c.job_id];
            let keep = filter.campaign_id.as_ref().is_none_or(|id| job.prompt_context.campaign_id.as_ref() == Some(id))
                && filter.teacher_backend.as_ref().is_none_or(|t| &job.teacher_backend == t)
                && filter.decided_from.is_none_or(|t| d.decided_at >= t)
                && filter.decided_until.is_none_or(|t| d.decided_at < t);
            if keep {
                rows.push((d.decided_at, &c.id, d));
            }
        }
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut manifest = ExportManifest { count: 0, reviewers: BTreeMap::new(), decided: 0, accepted: 0, rejected: 0, accept_rate: None };
        let mut jsonl = String::new();
        for (_, id, d) in rows {
            manifest.decided += 1;
            if !d.verdict.accepted() {
                manifest.rejected += 1;
                continue;
            }
            manifest.accepted += 1;
            let pair = &g.gold[id];
            jsonl.push_str(&serde_json::to_string(pair).expect("gold pairs serialize"));
            jsonl.push('\n');
            manifest.count += 1;
            *manifest.reviewers.entry(d.reviewer_id.clone()).or_default() += 1;
        }
        if manifest.decided > 0 {
            manifest.accept_rate = Some(manifest.accepted as f64 / manifest.decided as f64);
        }
        GoldExport { jsonl, manifest }
    }
}
