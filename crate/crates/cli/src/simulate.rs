//! Batch A/B simulation: several seeded campaigns, one report each plus an aggregate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use minilab_core::domain::{validate_campaign_spec, CampaignSpec};
use minilab_core::metrics::KpiReport;
use minilab_core::usage::PriceTable;
use minilab_core::{ArmId, Money};
use minilab_engine::experiment::{run_experiment, EventCounts, ExperimentConfig, ExperimentReport};
use minilab_engine::simulator::{parse_profiles, BehaviorProfile};
use minilab_engine::EngineDeps;
use minilab_gateway::{Gateway, Registry};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{read_file, CliError};
use crate::report::Provenance;

pub const DEFAULT_SPEC: &str = include_str!("../data/default_spec.json");
pub const DEFAULT_PROFILES: &str = include_str!("../data/profiles.json");
pub const DEFAULT_BACKENDS: &str = include_str!("../data/backends.json");

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub spec: PathBuf,
    pub profiles: PathBuf,
    pub leads: usize,
    pub campaigns: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub backends: Option<PathBuf>,
}

/// Seed for campaign `index`, independent of how many campaigns run.
pub fn derive_seed(base: u64, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"campaign");
    h.update(base.to_le_bytes());
    h.update((index as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub provenance: Provenance,
    pub index: usize,
    pub report: ExperimentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmAggregate {
    pub backend_name: String,
    pub leads: u64,
    pub steps_sent: u64,
    pub replies_sent: u64,
    pub kpi: Option<KpiReport>,
    pub cost_total: Money,
    pub cost_per_lead: Option<Money>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub provenance: Provenance,
    pub campaign_id: String,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub campaigns: usize,
    pub leads_per_campaign: usize,
    pub total_leads: u64,
    pub arms: BTreeMap<ArmId, ArmAggregate>,
    pub aggregate: Option<KpiReport>,
    pub cost_per_lead: Option<Money>,
    pub mean_steps_per_lead: Option<f64>,
    pub consistent: bool,
}

/// Rates recomputed from summed counts.
pub fn kpi_from_counts(c: &EventCounts) -> Option<KpiReport> {
    if c.delivered == 0 {
        return None;
    }
    let rate = |n: u64| 100.0 * n as f64 / c.delivered as f64;
    Some(KpiReport {
        delivered: c.delivered,
        opens: c.opens,
        clicks: c.clicks,
        replies: c.replies,
        unsubscribes: c.unsubscribes,
        open_rate: rate(c.opens),
        ctr: rate(c.clicks),
        reply_rate: rate(c.replies),
        unsub_rate: rate(c.unsubscribes),
    })
}

fn counts_of(k: &KpiReport) -> EventCounts {
    EventCounts { delivered: k.delivered, opens: k.opens, clicks: k.clicks, replies: k.replies, unsubscribes: k.unsubscribes }
}

pub fn aggregate(spec: &CampaignSpec, base_seed: u64, leads_per_campaign: usize, reports: &[CampaignReport]) -> AggregateReport {
    let mut arms: BTreeMap<ArmId, (ArmAggregate, EventCounts)> = spec
        .variant_arms
        .iter()
        .map(|a| {
            let agg = ArmAggregate {
                backend_name: a.backend_name.clone(),
                leads: 0,
                steps_sent: 0,
                replies_sent: 0,
                kpi: None,
                cost_total: Decimal::ZERO,
                cost_per_lead: None,
            };
            (a.arm_id.clone(), (agg, EventCounts::default()))
        })
        .collect();
    let mut consistent = true;
    for r in reports {
        consistent &= r.report.consistent;
        for (arm, o) in &r.report.arms {
            let (agg, counts) = arms.get_mut(arm).expect("every report uses the same spec");
            agg.leads += o.leads;
            agg.steps_sent += o.steps_sent;
            agg.replies_sent += o.replies_sent;
            agg.cost_total += o.cost_total;
            if let Some(k) = &o.kpi {
                counts.add(&counts_of(k));
            }
        }
    }
    let mut all = EventCounts::default();
    let (mut total_cost, mut total_leads, mut total_steps) = (Decimal::ZERO, 0u64, 0u64);
    let arms = arms
        .into_iter()
        .map(|(id, (mut agg, counts))| {
            all.add(&counts);
            total_cost += agg.cost_total;
            total_leads += agg.leads;
            total_steps += agg.steps_sent;
            agg.kpi = kpi_from_counts(&counts);
            agg.cost_total = agg.cost_total.normalize();
            agg.cost_per_lead = (agg.leads > 0).then(|| (agg.cost_total / Decimal::from(agg.leads)).normalize());
            (id, agg)
        })
        .collect();
    AggregateReport {
        provenance: Provenance::Computed,
        campaign_id: spec.id.to_string(),
        base_seed,
        seeds: reports.iter().map(|r| r.report.seed).collect(),
        campaigns: reports.len(),
        leads_per_campaign,
        total_leads,
        arms,
        aggregate: kpi_from_counts(&all),
        cost_per_lead: (total_leads > 0).then(|| (total_cost / Decimal::from(total_leads)).normalize()),
        mean_steps_per_lead: (total_leads > 0).then(|| total_steps as f64 / total_leads as f64),
        consistent,
    }
}

pub fn load_spec(path: &Path) -> Result<CampaignSpec, CliError> {
    let text = read_file(path)?;
    let spec = CampaignSpec::from_json(&text).map_err(|e| CliError::config(format!("cannot parse {}: {e}", path.display())))?;
    let report = validate_campaign_spec(&spec);
    if let Some(v) = report.0.first() {
        return Err(CliError::config(format!("{}: {} {}", path.display(), v.code.as_str(), v.detail)));
    }
    Ok(spec)
}

pub fn load_profiles(path: &Path) -> Result<BTreeMap<ArmId, BehaviorProfile>, CliError> {
    let text = read_file(path)?;
    parse_profiles(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn load_registry(path: Option<&Path>) -> Result<Registry, CliError> {
    match path {
        Some(p) => Registry::load(p).map_err(|e| CliError::config(e.to_string())),
        None => {
            let reg: Registry = serde_json::from_str(DEFAULT_BACKENDS).expect("bundled registry parses");
            reg.validate().expect("bundled registry is valid");
            Ok(reg)
        }
    }
}

/// Every arm needs a backend, a price and a profile before anything runs.
fn check_inputs(spec: &CampaignSpec, profiles: &BTreeMap<ArmId, BehaviorProfile>, registry: &Registry) -> Result<(), CliError> {
    for arm in &spec.variant_arms {
        if !profiles.contains_key(&arm.arm_id) {
            return Err(CliError::config(format!("no behavior profile for arm {}", arm.arm_id)));
        }
        if registry.backend(&arm.backend_name).is_none() {
            return Err(CliError::config(format!("arm {} uses unknown backend {:?}", arm.arm_id, arm.backend_name)));
        }
        if !registry.prices.0.contains_key(&arm.backend_name) {
            return Err(CliError::config(format!("no price for backend {:?}", arm.backend_name)));
        }
    }
    Ok(())
}

/// Runs `campaigns` experiments in parallel and returns them in index order.
pub fn run_batch(
    spec: &CampaignSpec,
    profiles: &BTreeMap<ArmId, BehaviorProfile>,
    registry: &Registry,
    leads: usize,
    campaigns: usize,
    seed: u64,
) -> Result<(Vec<CampaignReport>, AggregateReport), CliError> {
    check_inputs(spec, profiles, registry)?;
    let gateway = Arc::new(Gateway::new(registry.clone()).map_err(|e| CliError::config(e.to_string()))?);
    let prices: &PriceTable = &registry.prices;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(campaigns.max(1));

    let run_one = |index: usize| -> Result<CampaignReport, CliError> {
        let mut s = spec.clone();
        s.id = format!("{}-{index:02}", spec.id).into();
        let cfg = ExperimentConfig::new(leads, derive_seed(seed, index));
        let deps = EngineDeps::new(gateway.clone());
        let report = run_experiment(s, &cfg, profiles, deps, prices)
            .map_err(|e| CliError::runtime(format!("campaign {index}: {} {e}", e.code())))?;
        Ok(CampaignReport { provenance: Provenance::Computed, index, report })
    };

    let mut slots: Vec<Option<Result<CampaignReport, CliError>>> = (0..campaigns).map(|_| None).collect();
    let per = campaigns.div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        for (c, chunk) in slots.chunks_mut(per).enumerate() {
            let run_one = &run_one;
            scope.spawn(move || {
                for (j, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run_one(c * per + j));
                }
            });
        }
    });
    let reports = slots.into_iter().map(|s| s.expect("every slot ran")).collect::<Result<Vec<_>, _>>()?;
    let agg = aggregate(spec, seed, leads, &reports);
    Ok((reports, agg))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<AggregateReport, CliError> {
    let spec = load_spec(&args.spec)?;
    let profiles = load_profiles(&args.profiles)?;
    let registry = load_registry(args.backends.as_deref())?;
    let (reports, agg) = run_batch(&spec, &profiles, &registry, args.leads, args.campaigns, args.seed)?;

    let write = |name: String, body: String| {
        let path = args.out.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
    };
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", args.out.display())))?;
    for r in &reports {
        write(format!("campaign-{:02}.json", r.index), to_json(r))?;
    }
    write("aggregate.json".into(), to_json(&agg))?;
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
        let seeds: std::collections::BTreeSet<u64> = (0..100).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_ne!(derive_seed(42, 0), derive_seed(43, 0));
    }

    #[test]
    fn bundled_inputs_are_consistent() {
        let spec = CampaignSpec::from_json(DEFAULT_SPEC).unwrap();
        assert!(validate_campaign_spec(&spec).is_valid());
        let delays: Vec<u64> = spec.steps.iter().map(|s| s.delay).collect();
        assert_eq!(delays, vec![0, 3 * 86_400, 4 * 86_400, 4 * 86_400]);
        let profiles = parse_profiles(DEFAULT_PROFILES).unwrap();
        let registry = load_registry(None).unwrap();
        check_inputs(&spec, &profiles, &registry).unwrap();
    }

    #[test]
    fn rates_from_counts() {
        let k = kpi_from_counts(&EventCounts { delivered: 2000, opens: 664, clicks: 64, replies: 114, unsubscribes: 3 }).unwrap();
        assert!((k.open_rate - 33.2).abs() < 1e-12);
        assert!((k.ctr - 3.2).abs() < 1e-12);
        assert!((k.reply_rate - 5.7).abs() < 1e-12);
        assert!(kpi_from_counts(&EventCounts::default()).is_none());
    }
}
