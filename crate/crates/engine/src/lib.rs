//! Campaign execution, simulated recipients and the human review store.
//!
//! A [`Campaign`] owns one campaign's state. Every mutation is first turned
//! into a [`LogRecord`] (calling the model gateway where needed) and then
//! applied by a pure fold, so the JSONL journal replays to an identical state.

pub mod audit;
mod campaign;
pub mod curation;
mod error;
pub mod experiment;
mod journal;
mod prompt;
pub mod simulator;
mod state;

pub use campaign::{Campaign, EngineDeps};
pub use error::EngineError;
pub use journal::{read_log, Journal, JournalError};
pub use prompt::{build_prompt, split_subject, PromptKind};
pub use state::{ActionKind, CampaignState, Cursor, DraftStatus, InitialDraft, LeadState, LogRecord, ScheduledAction, SendKind, MAX_SEND_ATTEMPTS, RETRY_BASE_SECS};
