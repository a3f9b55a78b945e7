//! HTTP API over the campaign engine and the curation store.
//!
//! Campaigns live behind one mutex each and are journaled under
//! `<state-dir>/campaigns/<id>.jsonl`; curation is journaled to
//! `<state-dir>/curation.jsonl`. Engine and gateway calls block, so handlers
//! run them on the blocking pool.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path as UrlPath, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use minilab_core::domain::{assign_arm, validate_campaign_spec, CampaignSpec, EngagementEvent, Lead, MessageRecord};
use minilab_core::metrics::{kpi_rates, KpiReport};
use minilab_core::{ArmId, CampaignId, CandidateId, LeadId, Timestamp};
use minilab_engine::curation::{CurationError, CurationStore, ExportFilter, PromptContext, ReviewDecision, Verdict};
use minilab_engine::{Campaign, CampaignState, Cursor, EngineDeps, EngineError, InitialDraft, Journal, LeadState, ScheduledAction};
use minilab_gateway::research::{DefaultFetcher, ResearchProvider};
use minilab_gateway::{ChatClient, Gateway};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::error::CliError;
use crate::simulate::load_registry;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub port: u16,
    pub state_dir: PathBuf,
    pub backends: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    /// Seed for arm assignment of leads posted without an arm.
    pub assign_seed: u64,
    /// Backend that summarizes lead research; research is off when absent.
    pub research_backend: Option<String>,
}

pub struct AppState {
    campaigns: RwLock<BTreeMap<CampaignId, Arc<Mutex<Campaign>>>>,
    curation: Arc<CurationStore>,
    deps: EngineDeps,
    state_dir: PathBuf,
    assign_seed: u64,
}

impl AppState {
    /// Opens (or creates) the state directory and replays every journal found there.
    pub fn open(state_dir: &Path, client: Arc<dyn ChatClient>, deps: EngineDeps, assign_seed: u64) -> Result<Arc<Self>, CliError> {
        let dir = state_dir.join("campaigns");
        std::fs::create_dir_all(&dir).map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        let mut campaigns = BTreeMap::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| CliError::config(format!("cannot list {}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        entries.sort();
        for path in entries {
            let c = Campaign::open(&path, deps.clone()).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            campaigns.insert(c.spec().id.clone(), Arc::new(Mutex::new(c)));
        }
        let cur_path = state_dir.join("curation.jsonl");
        let curation = CurationStore::open(&cur_path, client).map_err(|e| CliError::runtime(format!("{}: {e}", cur_path.display())))?;
        Ok(Arc::new(Self {
            campaigns: RwLock::new(campaigns),
            curation: Arc::new(curation),
            deps,
            state_dir: state_dir.to_owned(),
            assign_seed,
        }))
    }

    fn campaign(&self, id: &str) -> Result<Arc<Mutex<Campaign>>, ApiError> {
        self.campaigns
            .read()
            .get(&CampaignId::from(id))
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_CAMPAIGN", format!("no campaign {id}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    extra: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, code: code.to_owned(), message: message.into(), extra: None }
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

fn status_for(code: &str) -> StatusCode {
    match code {
        c if c.starts_with("UNKNOWN_") && c != "UNKNOWN_BACKEND" => StatusCode::NOT_FOUND,
        "DUPLICATE_LEAD" | "DUPLICATE_CAMPAIGN" | "WRONG_STATE" | "ALREADY_DECIDED" | "OUT_OF_ORDER" => StatusCode::CONFLICT,
        "JOURNAL_ERROR" | "CORRUPT_LOG" | "INTERNAL" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let code = e.code();
        Self::new(status_for(code), code, e.to_string())
    }
}

impl From<CurationError> for ApiError {
    fn from(e: CurationError) -> Self {
        let code = e.code();
        let mut err = Self::new(status_for(code), code, e.to_string());
        if let CurationError::AlreadyDecided { stored, .. } = &e {
            err.extra = Some(json!({ "stored_decision": stored }));
        }
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": { "code": self.code, "message": self.message } });
        if let Some(Value::Object(extra)) = self.extra {
            for (k, v) in extra {
                body[k] = v;
            }
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body whose rejections use the API error shape.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: serde::de::DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(rejection(e)),
        }
    }
}

fn rejection(e: JsonRejection) -> ApiError {
    ApiError::bad_request("INVALID_BODY", e.body_text())
}

/// Optional JSON body: an empty request body yields the default.
pub struct MaybeBody<T>(pub T);

impl<S: Send + Sync, T: serde::de::DeserializeOwned + Default> FromRequest<S> for MaybeBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = axum::body::Bytes::from_request(req, state).await.map_err(|e| ApiError::bad_request("INVALID_BODY", e.body_text()))?;
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Ok(MaybeBody(T::default()));
        }
        serde_json::from_slice(&bytes).map(MaybeBody).map_err(|e| ApiError::bad_request("INVALID_BODY", e.to_string()))
    }
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?
}

fn safe_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && !id.starts_with('.')
}

#[derive(Debug, Deserialize)]
pub struct CreateCampaign {
    #[serde(flatten)]
    spec: CampaignSpec,
    #[serde(default)]
    now: Option<Timestamp>,
}

#[derive(Debug, Serialize)]
pub struct Created {
    campaign_id: CampaignId,
    created_at: Timestamp,
    initial_drafts: Vec<InitialDraft>,
}

async fn create_campaign(State(app): State<Arc<AppState>>, Body(body): Body<CreateCampaign>) -> ApiResult<(StatusCode, Json<Created>)> {
    let spec = body.spec;
    if !safe_id(spec.id.as_str()) {
        return Err(ApiError::bad_request("INVALID_ID", "campaign id must be 1-128 of [A-Za-z0-9._-]"));
    }
    let report = validate_campaign_spec(&spec);
    if !report.is_valid() {
        return Err(EngineError::InvalidSpec(report).into());
    }
    for arm in &spec.variant_arms {
        if !app.deps.client.knows_backend(&arm.backend_name) {
            return Err(ApiError::bad_request("UNKNOWN_BACKEND", format!("arm {} uses unknown backend {:?}", arm.arm_id, arm.backend_name)));
        }
    }
    let now = body.now.unwrap_or_else(Timestamp::now);
    blocking(move || {
        let mut map = app.campaigns.write();
        if map.contains_key(&spec.id) {
            return Err(ApiError::new(StatusCode::CONFLICT, "DUPLICATE_CAMPAIGN", format!("campaign {} exists", spec.id)));
        }
        let path = app.state_dir.join("campaigns").join(format!("{}.jsonl", spec.id));
        let journal = Journal::open(&path).map_err(EngineError::from)?;
        let campaign = Campaign::create(spec, now, app.deps.clone(), Some(journal))?;
        let created = Created {
            campaign_id: campaign.spec().id.clone(),
            created_at: campaign.state().created_at,
            initial_drafts: campaign.state().initial_drafts.clone(),
        };
        map.insert(created.campaign_id.clone(), Arc::new(Mutex::new(campaign)));
        Ok((StatusCode::CREATED, Json(created)))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct AddLead {
    id: LeadId,
    #[serde(default)]
    profile: BTreeMap<String, String>,
    #[serde(default)]
    arm_id: Option<ArmId>,
    #[serde(default)]
    now: Option<Timestamp>,
}

async fn add_lead(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Body(body): Body<AddLead>) -> ApiResult<(StatusCode, Json<ScheduledAction>)> {
    let campaign = app.campaign(&id)?;
    let now = body.now.unwrap_or_else(Timestamp::now);
    let seed = app.assign_seed;
    blocking(move || {
        let mut c = campaign.lock();
        let arm_id = match body.arm_id {
            Some(a) => a,
            None => assign_arm(body.id.as_str(), &c.spec().variant_arms, seed).map_err(|e| ApiError::bad_request("NO_ARMS", e.to_string()))?,
        };
        let action = c.add_lead(Lead { id: body.id, profile: body.profile, arm_id }, now)?;
        Ok((StatusCode::CREATED, Json(action)))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct PostEvent {
    campaign_id: CampaignId,
    #[serde(flatten)]
    event: EngagementEvent,
}

async fn post_event(State(app): State<Arc<AppState>>, Body(body): Body<PostEvent>) -> ApiResult<Json<Value>> {
    let campaign = app.campaign(body.campaign_id.as_str())?;
    blocking(move || {
        let accepted = campaign.lock().ingest_event(body.event)?;
        Ok(Json(json!({ "accepted": accepted, "duplicate": !accepted })))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
pub struct Clock {
    #[serde(default)]
    now: Option<Timestamp>,
}

async fn tick(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, MaybeBody(clock): MaybeBody<Clock>) -> ApiResult<Json<Value>> {
    let campaign = app.campaign(&id)?;
    let now = clock.now.unwrap_or_else(Timestamp::now);
    blocking(move || {
        let mut c = campaign.lock();
        let sent = c.tick(now)?;
        let sent: Vec<SentMessage> = sent.into_iter().map(|m| SentMessage::locate(c.state(), m)).collect();
        Ok(Json(json!({ "now": now, "sent": sent, "next_wakeup": c.state().next_wakeup() })))
    })
    .await
}

async fn draft_reply(State(app): State<Arc<AppState>>, UrlPath((id, lead)): UrlPath<(String, String)>, MaybeBody(clock): MaybeBody<Clock>) -> ApiResult<Json<SentMessage>> {
    let campaign = app.campaign(&id)?;
    let now = clock.now.unwrap_or_else(Timestamp::now);
    blocking(move || {
        let lead_id = LeadId::from(lead.as_str());
        let message = campaign.lock().draft_reply(&lead_id, now)?;
        Ok(Json(SentMessage { lead_id, message }))
    })
    .await
}

/// An outbound message tagged with its recipient.
#[derive(Debug, Serialize)]
pub struct SentMessage {
    lead_id: LeadId,
    #[serde(flatten)]
    message: MessageRecord,
}

impl SentMessage {
    fn locate(state: &CampaignState, message: MessageRecord) -> Self {
        let lead_id = state
            .leads
            .values()
            .find(|l| l.memory.history.iter().any(|m| m.id == message.id))
            .map(|l| l.lead.id.clone())
            .expect("sent message is in some lead's history");
        Self { lead_id, message }
    }
}

#[derive(Debug, Serialize)]
pub struct LeadSummary {
    lead_id: LeadId,
    arm_id: ArmId,
    cursor: Cursor,
    due: Option<Timestamp>,
    steps_sent: u32,
    replies_received: usize,
    unsubscribed: bool,
}

#[derive(Debug, Serialize)]
pub struct CampaignView {
    campaign_id: CampaignId,
    spec: CampaignSpec,
    created_at: Timestamp,
    initial_drafts: Vec<InitialDraft>,
    paused_arms: Vec<ArmId>,
    leads: Vec<LeadSummary>,
    pending_actions: Vec<ScheduledAction>,
    next_wakeup: Option<Timestamp>,
    all_finished: bool,
    kpi: BTreeMap<ArmId, Option<KpiReport>>,
}

fn view(state: &CampaignState) -> CampaignView {
    let leads = state
        .leads
        .values()
        .map(|l| LeadSummary {
            lead_id: l.lead.id.clone(),
            arm_id: l.lead.arm_id.clone(),
            cursor: l.cursor,
            due: l.due(),
            steps_sent: l.memory.steps_sent(),
            replies_received: l.memory.inbound.len(),
            unsubscribed: l.unsubscribed,
        })
        .collect();
    let kpi = state
        .spec
        .variant_arms
        .iter()
        .map(|a| {
            let events = state.events.iter().filter(|e| state.leads.get(&e.lead_id).is_some_and(|l| l.lead.arm_id == a.arm_id));
            (a.arm_id.clone(), kpi_rates(events).ok())
        })
        .collect();
    CampaignView {
        campaign_id: state.spec.id.clone(),
        spec: state.spec.clone(),
        created_at: state.created_at,
        initial_drafts: state.initial_drafts.clone(),
        paused_arms: state.paused_arms.iter().cloned().collect(),
        leads,
        pending_actions: state.pending_actions(),
        next_wakeup: state.next_wakeup(),
        all_finished: state.all_finished(),
        kpi,
    }
}

async fn campaign_state(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<CampaignView>> {
    let campaign = app.campaign(&id)?;
    let v = view(campaign.lock().state());
    Ok(Json(v))
}

async fn lead_state(State(app): State<Arc<AppState>>, UrlPath((id, lead)): UrlPath<(String, String)>) -> ApiResult<Json<LeadState>> {
    let campaign = app.campaign(&id)?;
    let c = campaign.lock();
    Ok(Json(c.lead(&LeadId::from(lead.as_str()))?.clone()))
}

async fn pause_arm(State(app): State<Arc<AppState>>, UrlPath((id, arm)): UrlPath<(String, String)>) -> ApiResult<Json<Value>> {
    set_paused(app, id, arm, true).await
}

async fn resume_arm(State(app): State<Arc<AppState>>, UrlPath((id, arm)): UrlPath<(String, String)>) -> ApiResult<Json<Value>> {
    set_paused(app, id, arm, false).await
}

async fn set_paused(app: Arc<AppState>, id: String, arm: String, paused: bool) -> ApiResult<Json<Value>> {
    let campaign = app.campaign(&id)?;
    blocking(move || {
        let mut c = campaign.lock();
        let arm = ArmId::from(arm.as_str());
        if paused {
            c.pause_arm(&arm)?;
        } else {
            c.resume_arm(&arm)?;
        }
        Ok(Json(json!({ "arm_id": arm, "paused": c.state().paused_arms.contains(&arm) })))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct EnqueueJob {
    context: PromptContext,
    teacher_backend: String,
    n_candidates: u32,
    #[serde(default)]
    now: Option<Timestamp>,
}

async fn enqueue_job(State(app): State<Arc<AppState>>, Body(body): Body<EnqueueJob>) -> ApiResult<(StatusCode, Json<Value>)> {
    let store = app.curation.clone();
    let now = body.now.unwrap_or_else(Timestamp::now);
    blocking(move || {
        let job = store.enqueue_job(body.context, &body.teacher_backend, body.n_candidates, now)?;
        let candidates: Vec<_> = job.candidate_ids.iter().filter_map(|id| store.candidate(id)).collect();
        Ok((StatusCode::CREATED, Json(json!({ "job": job, "candidates": candidates }))))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct QueueParams {
    #[serde(default)]
    limit: Option<usize>,
}

async fn review_queue(State(app): State<Arc<AppState>>, Query(q): Query<QueueParams>) -> Json<Value> {
    let items = app.curation.review_queue(q.limit.unwrap_or(50));
    Json(json!({ "items": items }))
}

#[derive(Debug, Deserialize)]
pub struct DecisionBody {
    reviewer_id: String,
    verdict: Verdict,
    #[serde(default)]
    edited_text: Option<String>,
    quality: u8,
    relevance: u8,
    accuracy: u8,
    #[serde(default)]
    decided_at: Option<Timestamp>,
    version: u32,
}

async fn submit_decision(State(app): State<Arc<AppState>>, UrlPath(candidate): UrlPath<String>, Body(b): Body<DecisionBody>) -> ApiResult<Json<Value>> {
    let store = app.curation.clone();
    let decision = ReviewDecision {
        reviewer_id: b.reviewer_id,
        verdict: b.verdict,
        edited_text: b.edited_text,
        quality: b.quality,
        relevance: b.relevance,
        accuracy: b.accuracy,
        decided_at: b.decided_at.unwrap_or_else(Timestamp::now),
        version: b.version,
    };
    blocking(move || {
        let c = store.submit_decision(&CandidateId::from(candidate.as_str()), decision)?;
        Ok(Json(json!({ "candidate": c })))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct ExportParams {
    #[serde(flatten)]
    filter: ExportFilter,
    #[serde(default)]
    format: Option<String>,
}

async fn export_gold(State(app): State<Arc<AppState>>, Query(q): Query<ExportParams>) -> ApiResult<Response> {
    let export = app.curation.export_gold(&q.filter);
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(json!({ "manifest": export.manifest, "jsonl": export.jsonl })).into_response()),
        Some("jsonl") => Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], export.jsonl).into_response()),
        Some(other) => Err(ApiError::bad_request("INVALID_FORMAT", format!("unknown format {other:?}"))),
    }
}

async fn review_stats(State(app): State<Arc<AppState>>) -> Json<Value> {
    let stats = app.curation.queue_stats();
    Json(json!(stats))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(app: Arc<AppState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/healthz", get(health))
        .route("/v1/campaigns", post(create_campaign))
        .route("/v1/campaigns/{id}/leads", post(add_lead))
        .route("/v1/campaigns/{id}/leads/{lead}", get(lead_state))
        .route("/v1/campaigns/{id}/leads/{lead}/reply", post(draft_reply))
        .route("/v1/campaigns/{id}/tick", post(tick))
        .route("/v1/campaigns/{id}/state", get(campaign_state))
        .route("/v1/campaigns/{id}/arms/{arm}/pause", post(pause_arm))
        .route("/v1/campaigns/{id}/arms/{arm}/resume", post(resume_arm))
        .route("/v1/events", post(post_event))
        .route("/v1/jobs", post(enqueue_job))
        .route("/v1/review/queue", get(review_queue))
        .route("/v1/review/stats", get(review_stats))
        .route("/v1/review/{candidate_id}/decision", post(submit_decision))
        .route("/v1/gold/export", get(export_gold))
        .with_state(app);
    match ui_dir {
        Some(dir) => api.nest_service("/ui", ServeDir::new(dir)),
        None => api,
    }
}

/// Gateway, optional researcher and replayed state for `serve`.
pub fn build_app(cfg: &ServeConfig) -> Result<Arc<AppState>, CliError> {
    let registry = load_registry(cfg.backends.as_deref())?;
    let gateway: Arc<Gateway> = Arc::new(Gateway::new(registry).map_err(|e| CliError::config(e.to_string()))?);
    let client: Arc<dyn ChatClient> = gateway.clone();
    let mut deps = EngineDeps::new(client.clone());
    if let Some(backend) = &cfg.research_backend {
        if !gateway.knows_backend(backend) {
            return Err(CliError::config(format!("unknown research backend {backend:?}")));
        }
        deps = deps.with_researcher(Arc::new(ResearchProvider::new(Arc::new(DefaultFetcher::default()), client.clone(), backend.clone())));
    }
    AppState::open(&cfg.state_dir, client, deps, cfg.assign_seed)
}

pub fn serve(cfg: &ServeConfig) -> Result<(), CliError> {
    let app = build_app(cfg)?;
    let ui = cfg.ui_dir.clone();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::runtime(e.to_string()))?;
    runtime.block_on(async move {
        let addr = std::net::SocketAddr::from(([0, 0, 0, 0], cfg.port));
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::runtime(format!("cannot bind {addr}: {e}")))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(|e| CliError::runtime(e.to_string()))?);
        axum::serve(listener, router(app, ui.as_deref()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::runtime(e.to_string()))
    })
}
