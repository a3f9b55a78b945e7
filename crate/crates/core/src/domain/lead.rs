use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{ArmId, LeadId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lead {
    pub id: LeadId,
    /// name, role, company, profile_url and any other `*_url` research sources.
    #[serde(default)]
    pub profile: BTreeMap<String, String>,
    pub arm_id: ArmId,
}

impl Lead {
    /// Profile entries whose key is `profile_url` or ends in `_url`, in key order.
    pub fn source_urls(&self) -> Vec<&str> {
        self.profile
            .iter()
            .filter(|(k, _)| k.as_str() == "profile_url" || k.ends_with("_url"))
            .map(|(_, v)| v.as_str())
            .collect()
    }
}
