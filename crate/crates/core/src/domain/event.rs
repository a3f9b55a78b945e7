use serde::{Deserialize, Serialize};

use crate::ids::{LeadId, MessageId};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Delivered,
    Open,
    Click,
    Reply,
    Unsubscribe,
}

impl EventKind {
    /// Replies may legitimately repeat; every other kind is idempotent per message.
    pub fn is_idempotent(self) -> bool {
        !matches!(self, EventKind::Reply)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementEvent {
    pub lead_id: LeadId,
    pub kind: EventKind,
    pub timestamp: Timestamp,
    /// The outbound message this event is about.
    pub message_ref: MessageId,
    /// Reply text, for `reply` events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
}

impl EngagementEvent {
    pub fn new(lead_id: LeadId, kind: EventKind, timestamp: Timestamp, message_ref: MessageId) -> Self {
        Self { lead_id, kind, timestamp, message_ref, body: None }
    }

    /// Identity used for deduplication; `None` for kinds that may repeat.
    pub fn dedup_key(&self) -> Option<(LeadId, EventKind, MessageId)> {
        self.kind
            .is_idempotent()
            .then(|| (self.lead_id.clone(), self.kind, self.message_ref.clone()))
    }
}
