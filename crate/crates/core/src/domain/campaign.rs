use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{ArmId, CampaignId};

/// Tolerance on the arm-weight sum.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Email,
    Linkedin,
}

impl Channel {
    /// Only email carries a subject line.
    pub fn has_subject(self) -> bool {
        matches!(self, Channel::Email)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Email => "email",
            Channel::Linkedin => "linkedin",
        })
    }
}

/// One configured touch in the outreach sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceStep {
    pub index: u32,
    pub channel: Channel,
    /// Seconds after the previous step was sent (after lead creation for step 0).
    pub delay: u64,
    pub instructions: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantArm {
    pub arm_id: ArmId,
    /// Key into the model backend registry.
    pub backend_name: String,
    pub weight: f64,
}

/// The configured outreach plan. Serialized field-for-field as the campaign spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub id: CampaignId,
    pub name: String,
    pub value_proposition: String,
    #[serde(default)]
    pub pain_points: Vec<String>,
    #[serde(default)]
    pub research_goals: Vec<String>,
    pub outreach_instructions: String,
    pub steps: Vec<SequenceStep>,
    pub variant_arms: Vec<VariantArm>,
}

impl CampaignSpec {
    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn arm(&self, arm_id: &ArmId) -> Option<&VariantArm> {
        self.variant_arms.iter().find(|a| &a.arm_id == arm_id)
    }

    pub fn step(&self, index: u32) -> Option<&SequenceStep> {
        self.steps.get(index as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    EmptySequence,
    StepIndexGap,
    NoArms,
    DuplicateArm,
    ArmWeightRange,
    ArmWeightSum,
    EmptyBackend,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::EmptySequence => "EMPTY_SEQUENCE",
            ViolationCode::StepIndexGap => "STEP_INDEX_GAP",
            ViolationCode::NoArms => "NO_ARMS",
            ViolationCode::DuplicateArm => "DUPLICATE_ARM",
            ViolationCode::ArmWeightRange => "ARM_WEIGHT_RANGE",
            ViolationCode::ArmWeightSum => "ARM_WEIGHT_SUM",
            ViolationCode::EmptyBackend => "EMPTY_BACKEND",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

/// Every violated invariant; empty means the spec is valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidationReport(pub Vec<Violation>);

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.0.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.0.iter().any(|v| v.code == code)
    }

    pub fn first_code(&self) -> Option<ViolationCode> {
        self.0.first().map(|v| v.code)
    }

    fn push(&mut self, code: ViolationCode, detail: impl Into<String>) {
        self.0.push(Violation { code, detail: detail.into() });
    }
}

pub fn validate_campaign_spec(spec: &CampaignSpec) -> ValidationReport {
    let mut report = ValidationReport::default();

    if spec.steps.is_empty() {
        report.push(ViolationCode::EmptySequence, "campaign has no steps");
    }
    for (pos, step) in spec.steps.iter().enumerate() {
        if step.index as usize != pos {
            report.push(
                ViolationCode::StepIndexGap,
                format!("step at position {pos} has index {}", step.index),
            );
        }
    }

    if spec.variant_arms.is_empty() {
        report.push(ViolationCode::NoArms, "campaign has no variant arms");
    }
    let mut seen = BTreeSet::new();
    for arm in &spec.variant_arms {
        if !seen.insert(&arm.arm_id) {
            report.push(ViolationCode::DuplicateArm, format!("arm {} listed twice", arm.arm_id));
        }
        if !(arm.weight > 0.0 && arm.weight <= 1.0) {
            report.push(
                ViolationCode::ArmWeightRange,
                format!("arm {} weight {} outside (0, 1]", arm.arm_id, arm.weight),
            );
        }
        if arm.backend_name.trim().is_empty() {
            report.push(ViolationCode::EmptyBackend, format!("arm {} names no backend", arm.arm_id));
        }
    }
    if !spec.variant_arms.is_empty() {
        let sum: f64 = spec.variant_arms.iter().map(|a| a.weight).sum();
        if !sum.is_finite() || (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            report.push(ViolationCode::ArmWeightSum, format!("arm weights sum to {sum}"));
        }
    }
    report
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn four_step_spec() -> CampaignSpec {
        let day = 86_400;
        let steps = [(0, Channel::Email), (3 * day, Channel::Linkedin), (4 * day, Channel::Email), (4 * day, Channel::Email)]
            .into_iter()
            .enumerate()
            .map(|(i, (delay, channel))| SequenceStep {
                index: i as u32,
                channel,
                delay,
                instructions: format!("step {i}"),
            })
            .collect();
        CampaignSpec {
            id: "c1".into(),
            name: "Q3 outbound".into(),
            value_proposition: "Cut onboarding time in half".into(),
            pain_points: vec!["slow ramp".into()],
            research_goals: vec!["recent funding".into()],
            outreach_instructions: "Be brief.".into(),
            steps,
            variant_arms: vec![
                VariantArm { arm_id: "a".into(), backend_name: "gpt-4o".into(), weight: 0.5 },
                VariantArm { arm_id: "b".into(), backend_name: "gemma-12b-lora".into(), weight: 0.5 },
            ],
        }
    }

    #[test]
    fn canonical_four_step_spec_is_valid() {
        assert!(validate_campaign_spec(&four_step_spec()).is_valid());
    }

    #[test]
    fn empty_sequence_reported() {
        let mut spec = four_step_spec();
        spec.steps.clear();
        let report = validate_campaign_spec(&spec);
        assert_eq!(report.first_code(), Some(ViolationCode::EmptySequence));
    }

    #[test]
    fn weights_over_one_reported() {
        let mut spec = four_step_spec();
        spec.variant_arms[0].weight = 0.6;
        spec.variant_arms[1].weight = 0.6;
        let report = validate_campaign_spec(&spec);
        assert_eq!(report.0.len(), 1);
        assert!(report.has(ViolationCode::ArmWeightSum));
    }

    #[test]
    fn gaps_and_duplicates_reported() {
        let mut spec = four_step_spec();
        spec.steps[2].index = 7;
        spec.variant_arms[1].arm_id = "a".into();
        let report = validate_campaign_spec(&spec);
        assert!(report.has(ViolationCode::StepIndexGap));
        assert!(report.has(ViolationCode::DuplicateArm));
    }

    #[test]
    fn spec_json_uses_integer_seconds() {
        let json = serde_json::to_value(four_step_spec()).unwrap();
        assert_eq!(json["steps"][1]["delay"], 259_200);
        assert_eq!(json["steps"][1]["channel"], "linkedin");
        assert_eq!(json["variant_arms"][0]["arm_id"], "a");
    }
}
