use minilab_core::domain::{MemoryError, ValidationReport};
use minilab_core::{ArmId, LeadId, MessageId, Timestamp};
use thiserror::Error;

use crate::journal::JournalError;
use crate::state::Cursor;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid campaign spec: {0:?}")]
    InvalidSpec(ValidationReport),
    #[error("lead {0} already exists")]
    DuplicateLead(LeadId),
    #[error("arm {0} is not part of this campaign")]
    UnknownArm(ArmId),
    #[error("unknown lead {0}")]
    UnknownLead(LeadId),
    #[error("lead {lead} has no outbound message {message}")]
    UnknownMessage { lead: LeadId, message: MessageId },
    #[error("lead {lead} is {cursor:?}; operation needs {needed}")]
    WrongState { lead: LeadId, cursor: Cursor, needed: &'static str },
    #[error("time {at} precedes the lead's last message at {last}")]
    ClockRegression { at: Timestamp, last: Timestamp },
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("corrupt log: {0}")]
    Corrupt(String),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::InvalidSpec(r) => r.first_code().map(|c| c.as_str()).unwrap_or("INVALID_SPEC"),
            EngineError::DuplicateLead(_) => "DUPLICATE_LEAD",
            EngineError::UnknownArm(_) => "UNKNOWN_ARM",
            EngineError::UnknownLead(_) => "UNKNOWN_LEAD",
            EngineError::UnknownMessage { .. } => "UNKNOWN_MESSAGE",
            EngineError::WrongState { .. } => "WRONG_STATE",
            EngineError::ClockRegression { .. } | EngineError::Memory(_) => "OUT_OF_ORDER",
            EngineError::Journal(_) => "JOURNAL_ERROR",
            EngineError::Corrupt(_) => "CORRUPT_LOG",
        }
    }

    /// True for caller mistakes (bad input) as opposed to storage failures.
    pub fn is_client_error(&self) -> bool {
        !matches!(self, EngineError::Journal(_) | EngineError::Corrupt(_))
    }
}
