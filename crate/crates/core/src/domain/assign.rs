use sha2::{Digest, Sha256};
use thiserror::Error;

use super::VariantArm;
use crate::ids::ArmId;

#[derive(Debug, Error, PartialEq)]
pub enum AssignError {
    #[error("no variant arms to assign from")]
    NoArms,
}

/// Deterministically maps a lead to an arm.
///
/// A SHA-256 of `seed || lead_id` gives a uniform draw in [0, 1) that is walked
/// along the cumulative arm weights. Independent of call order and of the other
/// leads in the campaign.
pub fn assign_arm(lead_id: &str, arms: &[VariantArm], seed: u64) -> Result<ArmId, AssignError> {
    let last = arms.last().ok_or(AssignError::NoArms)?;
    let total: f64 = arms.iter().map(|a| a.weight).sum();
    let draw = unit_draw(lead_id, seed) * total;

    let mut acc = 0.0;
    for arm in arms {
        acc += arm.weight;
        if draw < acc {
            return Ok(arm.arm_id.clone());
        }
    }
    Ok(last.arm_id.clone())
}

fn unit_draw(lead_id: &str, seed: u64) -> f64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(lead_id.as_bytes());
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
}
