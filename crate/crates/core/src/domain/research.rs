use serde::{Deserialize, Serialize};
use url::Url;

use crate::ids::LeadId;
use crate::time::Timestamp;
use crate::usage::UsageRecord;

/// Plain text extracted from one fetched page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub url: Url,
    pub fetched_at: Timestamp,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchDossier {
    pub lead_id: LeadId,
    pub summary: String,
    pub sources: Vec<SourceDocument>,
    pub model_backend: String,
    pub usage: UsageRecord,
}
