//! Teacher and learner model catalog.

use std::str::FromStr;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::lora::{rank_for_model, LayerShape, LoraSpec};

const BUNDLED: &str = include_str!("../data/model_catalog.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    Teacher,
    Learner,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub family: String,
    /// Parameter count as published, e.g. "1.7B" or ">100B".
    pub params: String,
    /// Context window as published, e.g. "8K".
    pub context_length: String,
    #[serde(rename = "type")]
    pub role: ModelRole,
    /// Transformer hidden width, where configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_size: Option<u64>,
}

impl ModelEntry {
    /// Exact parameter count; `None` for bounds such as ">100B".
    pub fn param_count(&self) -> Option<u64> {
        parse_size(&self.params, 1_000_000_000)
    }

    pub fn context_thousands(&self) -> Option<u64> {
        parse_size(&self.context_length, 1)
    }

    /// Rank assignment for learners with a known size.
    pub fn lora_spec(&self) -> Option<LoraSpec> {
        match self.role {
            ModelRole::Learner => self.param_count().map(rank_for_model),
            ModelRole::Teacher => None,
        }
    }

    /// A square `hidden × hidden` projection, where the width is configured.
    pub fn attention_projection(&self) -> Option<LayerShape> {
        self.hidden_size.and_then(|h| LayerShape::square(format!("{} q_proj", self.name), h).ok())
    }
}

fn parse_size(label: &str, unit: u64) -> Option<u64> {
    let digits = label.trim().strip_suffix(['B', 'K', 'b', 'k'])?;
    let value = Decimal::from_str(digits).ok()?;
    (value * Decimal::from(unit)).to_u64()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCatalog {
    pub models: Vec<ModelEntry>,
}

impl ModelCatalog {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED).expect("bundled catalog parses")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn get(&self, name: &str) -> Option<&ModelEntry> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn learners(&self) -> impl Iterator<Item = &ModelEntry> {
        self.models.iter().filter(|m| m.role == ModelRole::Learner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lora::reduction_ratio;

    #[test]
    fn bundled_catalog_shape() {
        let cat = ModelCatalog::bundled();
        assert_eq!(cat.models.iter().filter(|m| m.role == ModelRole::Teacher).count(), 4);
        assert_eq!(cat.learners().count(), 8);
        assert_eq!(cat.get("Qwen3-1.7B").unwrap().param_count(), Some(1_700_000_000));
        assert_eq!(cat.get("GPT-4o").unwrap().param_count(), None);
        assert_eq!(cat.get("Gemma-3-12B-it").unwrap().context_thousands(), Some(32));
    }

    #[test]
    fn ranks_follow_size_rule() {
        let cat = ModelCatalog::bundled();
        for m in cat.learners() {
            let params = m.param_count().unwrap();
            let want = if params <= 3_000_000_000 { 16 } else { 32 };
            assert_eq!(m.lora_spec().unwrap().rank, want, "{}", m.name);
        }
        assert!(cat.get("Claude-4-Sonnet").unwrap().lora_spec().is_none());
    }

    #[test]
    fn projection_reductions_are_reported() {
        // Square hidden×hidden projections: ratios depend on width, so they are
        // reported rather than held to a single threshold.
        for m in ModelCatalog::bundled().learners() {
            let shape = m.attention_projection().unwrap();
            let spec = m.lora_spec().unwrap();
            let got: f64 = reduction_ratio(&shape, &spec);
            let h = m.hidden_size.unwrap() as f64;
            let want = 100.0 * (1.0 - f64::from(spec.rank) * 2.0 * h / (h * h));
            assert!((got - want).abs() < 1e-9);
            assert!(got > 97.0, "{} {got}", m.name);
        }
    }
}
