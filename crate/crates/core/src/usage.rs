//! Token usage records and exact-decimal cost accounting.

use std::collections::BTreeMap;
use std::fmt;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::LeadId;
use crate::time::Timestamp;
use crate::Money;

const TOKENS_PER_PRICE_UNIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub backend_name: String,
    pub timestamp: Timestamp,
}

impl UsageRecord {
    pub fn new(backend_name: impl Into<String>, prompt_tokens: u64, completion_tokens: u64, timestamp: Timestamp) -> Self {
        Self { prompt_tokens, completion_tokens, backend_name: backend_name.into(), timestamp }
    }
}

/// Per-million-token prices for one backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Price {
    pub input_price: Money,
    pub output_price: Money,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable(pub BTreeMap<String, Price>);

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("no price for backend {0:?}")]
    UnknownBackend(String),
    #[error("negative price for backend {0:?}")]
    NegativePrice(String),
}

impl CostError {
    pub fn code(&self) -> &'static str {
        match self {
            CostError::UnknownBackend(_) => "UNKNOWN_BACKEND",
            CostError::NegativePrice(_) => "NEGATIVE_PRICE",
        }
    }
}

impl PriceTable {
    pub fn insert(&mut self, backend: impl Into<String>, input_price: Money, output_price: Money) {
        self.0.insert(backend.into(), Price { input_price, output_price });
    }

    pub fn validate(&self) -> Result<(), CostError> {
        match self.0.iter().find(|(_, p)| p.input_price.is_sign_negative() || p.output_price.is_sign_negative()) {
            Some((name, _)) => Err(CostError::NegativePrice(name.clone())),
            None => Ok(()),
        }
    }
}

/// `prompt/1e6 * input_price + completion/1e6 * output_price`, exact.
pub fn cost_of(usage: &UsageRecord, prices: &PriceTable) -> Result<Money, CostError> {
    let price = prices
        .0
        .get(&usage.backend_name)
        .ok_or_else(|| CostError::UnknownBackend(usage.backend_name.clone()))?;
    let per = Decimal::from(TOKENS_PER_PRICE_UNIT);
    let input = Decimal::from(usage.prompt_tokens) * price.input_price / per;
    let output = Decimal::from(usage.completion_tokens) * price.output_price / per;
    Ok((input + output).normalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsagePurpose {
    InitialDraft,
    Research,
    Draft,
    Reply,
    Curation,
}

impl fmt::Display for UsagePurpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            UsagePurpose::InitialDraft => "initial_draft",
            UsagePurpose::Research => "research",
            UsagePurpose::Draft => "draft",
            UsagePurpose::Reply => "reply",
            UsagePurpose::Curation => "curation",
        };
        f.write_str(s)
    }
}

/// A usage record tagged with the lead it was spent on (if any) and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_id: Option<LeadId>,
    pub purpose: UsagePurpose,
    pub usage: UsageRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeadCosts {
    pub per_lead: BTreeMap<LeadId, Money>,
}

impl LeadCosts {
    /// Mean cost across leads; `None` when there are no leads.
    pub fn mean(&self) -> Option<Money> {
        if self.per_lead.is_empty() {
            return None;
        }
        let total: Money = self.per_lead.values().copied().sum();
        Some((total / Decimal::from(self.per_lead.len())).normalize())
    }

    pub fn total(&self) -> Money {
        self.per_lead.values().copied().sum()
    }
}

/// Sums costs per lead. Entries without a lead (campaign-level drafts) are skipped.
pub fn ledger_per_lead<'a, I>(entries: I, prices: &PriceTable) -> Result<LeadCosts, CostError>
where
    I: IntoIterator<Item = &'a LedgerEntry>,
{
    let mut per_lead: BTreeMap<LeadId, Money> = BTreeMap::new();
    for entry in entries {
        let Some(lead) = &entry.lead_id else { continue };
        let cost = cost_of(&entry.usage, prices)?;
        *per_lead.entry(lead.clone()).or_default() += cost;
    }
    for v in per_lead.values_mut() {
        *v = v.normalize();
    }
    Ok(LeadCosts { per_lead })
}

/// Total cost of a set of entries, including campaign-level ones.
pub fn ledger_total<'a, I>(entries: I, prices: &PriceTable) -> Result<Money, CostError>
where
    I: IntoIterator<Item = &'a LedgerEntry>,
{
    entries
        .into_iter()
        .map(|e| cost_of(&e.usage, prices))
        .sum::<Result<Money, _>>()
        .map(|m| m.normalize())
}
