//! Campaign, lead, message and engagement vocabulary.

mod assign;
mod campaign;
mod event;
mod lead;
mod message;
mod research;

pub use assign::{assign_arm, AssignError};
pub use campaign::{
    validate_campaign_spec, CampaignSpec, Channel, SequenceStep, ValidationReport, VariantArm,
    Violation, ViolationCode,
};
pub use event::{EngagementEvent, EventKind};
pub use lead::Lead;
pub use message::{AgentMemory, Direction, MemoryError, MessageRecord};
pub use research::{ResearchDossier, SourceDocument};
