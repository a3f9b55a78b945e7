//! Discrete-event A/B run: leads are added, the engine ticks at every due
//! instant, each sent step is fed to the simulator, and the resulting events
//! are ingested in timestamp order until nothing is left to do.

use std::collections::{BTreeMap, BTreeSet};

use minilab_core::domain::{assign_arm, CampaignSpec, EngagementEvent, EventKind, Lead};
use minilab_core::metrics::{kpi_rates, KpiReport};
use minilab_core::usage::{ledger_per_lead, CostError, PriceTable};
use minilab_core::{ArmId, LeadId, Money, Timestamp};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{Campaign, EngineDeps};
use crate::error::EngineError;
use crate::simulator::{simulate_message, BehaviorProfile, SimError};

/// Monday 2025-01-06 00:00:00 UTC.
pub const DEFAULT_START: Timestamp = Timestamp(1_736_121_600);

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("no behavior profile for arm {0}")]
    MissingProfile(ArmId),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

impl ExperimentError {
    pub fn code(&self) -> &'static str {
        match self {
            ExperimentError::MissingProfile(_) => "MISSING_PROFILE",
            ExperimentError::Engine(e) => e.code(),
            ExperimentError::Sim(e) => e.code(),
            ExperimentError::Cost(e) => e.code(),
        }
    }
}

/// Event counts kept by the driver while feeding the simulator's output to the engine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub delivered: u64,
    pub opens: u64,
    pub clicks: u64,
    pub replies: u64,
    pub unsubscribes: u64,
}

impl EventCounts {
    fn bump(&mut self, kind: EventKind) {
        match kind {
            EventKind::Delivered => self.delivered += 1,
            EventKind::Open => self.opens += 1,
            EventKind::Click => self.clicks += 1,
            EventKind::Reply => self.replies += 1,
            EventKind::Unsubscribe => self.unsubscribes += 1,
        }
    }

    pub fn add(&mut self, o: &EventCounts) {
        self.delivered += o.delivered;
        self.opens += o.opens;
        self.clicks += o.clicks;
        self.replies += o.replies;
        self.unsubscribes += o.unsubscribes;
    }

    pub fn matches(&self, k: &KpiReport) -> bool {
        (self.delivered, self.opens, self.clicks, self.replies, self.unsubscribes) == (k.delivered, k.opens, k.clicks, k.replies, k.unsubscribes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmOutcome {
    pub arm_id: ArmId,
    pub backend_name: String,
    pub leads: u64,
    pub steps_sent: u64,
    pub replies_sent: u64,
    pub kpi: Option<KpiReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kpi_error: Option<String>,
    pub simulated: EventCounts,
    pub cost_total: Money,
    pub cost_per_lead: Option<Money>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub campaign_id: String,
    pub seed: u64,
    pub n_leads: u64,
    pub arms: BTreeMap<ArmId, ArmOutcome>,
    pub aggregate: Option<KpiReport>,
    pub simulated: EventCounts,
    pub cost_per_lead: Option<Money>,
    /// Simulated event counts equal the KPI counts recomputed from the engine's event store.
    pub consistent: bool,
    pub finished_at: Timestamp,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_leads: usize,
    pub seed: u64,
    pub start: Timestamp,
}

impl ExperimentConfig {
    pub fn new(n_leads: usize, seed: u64) -> Self {
        Self { n_leads, seed, start: DEFAULT_START }
    }
}

const COMPANIES: [&str; 8] = ["Northwind", "Contoso", "Globex", "Initech", "Umbrella Foods", "Hooli", "Vandelay", "Soylent"];
const ROLES: [&str; 5] = ["VP Sales", "Head of Growth", "CTO", "Operations Lead", "Founder"];

pub fn synthetic_lead(i: usize, spec: &CampaignSpec, seed: u64) -> Lead {
    let id = LeadId::from(format!("lead-{i:05}"));
    let arm_id = assign_arm(id.as_str(), &spec.variant_arms, seed).expect("validated spec has arms");
    let mut profile = BTreeMap::new();
    profile.insert("name".to_owned(), format!("Prospect {i}"));
    profile.insert("company".to_owned(), COMPANIES[i % COMPANIES.len()].to_owned());
    profile.insert("role".to_owned(), ROLES[i % ROLES.len()].to_owned());
    Lead { id, profile, arm_id }
}

/// Runs one campaign end to end against simulated recipients and returns the campaign for inspection.
pub fn run_campaign(
    spec: CampaignSpec,
    cfg: &ExperimentConfig,
    profiles: &BTreeMap<ArmId, BehaviorProfile>,
    deps: EngineDeps,
) -> Result<(Campaign, BTreeMap<ArmId, EventCounts>, Timestamp), ExperimentError> {
    for arm in &spec.variant_arms {
        if !profiles.contains_key(&arm.arm_id) {
            return Err(ExperimentError::MissingProfile(arm.arm_id.clone()));
        }
    }
    let seed = cfg.seed;
    let leads: Vec<Lead> = (0..cfg.n_leads).map(|i| synthetic_lead(i, &spec, seed)).collect();
    let mut campaign = Campaign::create(spec, cfg.start, deps, None)?;
    let mut arm_of: BTreeMap<LeadId, ArmId> = BTreeMap::new();
    for lead in leads {
        arm_of.insert(lead.id.clone(), lead.arm_id.clone());
        campaign.add_lead(lead, cfg.start)?;
    }

    let mut counts: BTreeMap<ArmId, EventCounts> = campaign.spec().variant_arms.iter().map(|a| (a.arm_id.clone(), EventCounts::default())).collect();
    let mut queue: BTreeMap<(Timestamp, u64), EngagementEvent> = BTreeMap::new();
    let mut seq = 0u64;
    let mut now = cfg.start;
    loop {
        let next_event = queue.keys().next().map(|k| k.0);
        let t = match (campaign.state().next_wakeup(), next_event) {
            (None, None) => break,
            (a, b) => a.into_iter().chain(b).min().expect("one side is set"),
        };
        now = now.max(t);
        while let Some(entry) = queue.first_entry() {
            if entry.key().0 > t {
                break;
            }
            let ev = entry.remove();
            let arm = &arm_of[&ev.lead_id];
            if campaign.ingest_event(ev.clone())? {
                counts.get_mut(arm).expect("arm counted").bump(ev.kind);
            }
        }
        for m in campaign.tick(t)? {
            if m.step_index.is_none() {
                continue;
            }
            let lead_id: LeadId = m.id.as_str().split('/').next().expect("message ids are lead/seq").into();
            let profile = &profiles[&arm_of[&lead_id]];
            for ev in simulate_message(&lead_id, &m, profile, seed)? {
                queue.insert((ev.timestamp, seq), ev);
                seq += 1;
            }
        }
    }
    Ok((campaign, counts, now))
}

pub fn run_experiment(
    spec: CampaignSpec,
    cfg: &ExperimentConfig,
    profiles: &BTreeMap<ArmId, BehaviorProfile>,
    deps: EngineDeps,
    prices: &PriceTable,
) -> Result<ExperimentReport, ExperimentError> {
    let (campaign, counts, finished_at) = run_campaign(spec, cfg, profiles, deps)?;
    summarize(&campaign, &counts, cfg, prices, finished_at)
}

pub fn summarize(
    campaign: &Campaign,
    counts: &BTreeMap<ArmId, EventCounts>,
    cfg: &ExperimentConfig,
    prices: &PriceTable,
    finished_at: Timestamp,
) -> Result<ExperimentReport, ExperimentError> {
    let state = campaign.state();
    let per_lead = ledger_per_lead(state.ledger_entries().iter(), prices)?;
    let mut arms = BTreeMap::new();
    let mut consistent = true;
    let mut all_counts = EventCounts::default();
    for arm in &state.spec.variant_arms {
        let members: BTreeSet<&LeadId> = state.leads.iter().filter(|(_, l)| l.lead.arm_id == arm.arm_id).map(|(id, _)| id).collect();
        let events: Vec<&EngagementEvent> = state.events.iter().filter(|e| members.contains(&e.lead_id)).collect();
        let simulated = counts.get(&arm.arm_id).copied().unwrap_or_default();
        all_counts.add(&simulated);
        let (kpi, kpi_error) = match kpi_rates(events.iter().copied()) {
            Ok(k) => {
                consistent &= simulated.matches(&k);
                (Some(k), None)
            }
            Err(e) => {
                consistent &= simulated.delivered == 0;
                (None, Some(e.code().to_owned()))
            }
        };
        let mut steps_sent = 0;
        let mut replies_sent = 0;
        let mut cost_total = Decimal::ZERO;
        for id in &members {
            let l = &state.leads[*id];
            steps_sent += l.memory.steps_sent() as u64;
            replies_sent += l.memory.history.iter().filter(|m| m.step_index.is_none()).count() as u64;
            cost_total += per_lead.per_lead.get(*id).copied().unwrap_or_default();
        }
        let cost_per_lead = (!members.is_empty()).then(|| (cost_total / Decimal::from(members.len())).normalize());
        arms.insert(
            arm.arm_id.clone(),
            ArmOutcome {
                arm_id: arm.arm_id.clone(),
                backend_name: arm.backend_name.clone(),
                leads: members.len() as u64,
                steps_sent,
                replies_sent,
                kpi,
                kpi_error,
                simulated,
                cost_total: cost_total.normalize(),
                cost_per_lead,
            },
        );
    }
    let aggregate = kpi_rates(state.events.iter()).ok();
    if let Some(a) = &aggregate {
        consistent &= all_counts.matches(a);
    }
    Ok(ExperimentReport {
        campaign_id: state.spec.id.to_string(),
        seed: cfg.seed,
        n_leads: cfg.n_leads as u64,
        arms,
        aggregate,
        simulated: all_counts,
        cost_per_lead: per_lead.mean(),
        consistent,
        finished_at,
    })
}
