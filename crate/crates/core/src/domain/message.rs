use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Channel, ResearchDossier};
use crate::ids::{LeadId, MessageId};
use crate::time::Timestamp;
use crate::usage::UsageRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Outbound,
    Inbound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub id: MessageId,
    /// Position in the lead's conversation across both directions.
    pub seq: u32,
    pub direction: Direction,
    pub channel: Channel,
    /// Sequence step this message realizes; absent for ad-hoc replies and inbound mail.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub body: String,
    pub timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<UsageRecord>,
}

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("message {id} at {at} precedes the last {direction:?} message at {last}")]
    OutOfOrder { id: MessageId, direction: Direction, at: Timestamp, last: Timestamp },
    #[error("message {0} has the wrong direction for this log")]
    WrongDirection(MessageId),
    #[error("outbound message {0} names a backend but carries no usage")]
    MissingUsage(MessageId),
}

/// Per-lead conversational state. Both logs are append-only and timestamp ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMemory {
    pub lead_id: LeadId,
    #[serde(default)]
    pub research_dossier: Option<ResearchDossier>,
    #[serde(default)]
    pub history: Vec<MessageRecord>,
    #[serde(default)]
    pub inbound: Vec<MessageRecord>,
}

impl AgentMemory {
    pub fn new(lead_id: LeadId) -> Self {
        Self { lead_id, research_dossier: None, history: Vec::new(), inbound: Vec::new() }
    }

    pub fn next_seq(&self) -> u32 {
        (self.history.len() + self.inbound.len()) as u32
    }

    pub fn push_outbound(&mut self, record: MessageRecord) -> Result<(), MemoryError> {
        if record.direction != Direction::Outbound {
            return Err(MemoryError::WrongDirection(record.id));
        }
        if record.model_backend.is_some() && record.usage.is_none() {
            return Err(MemoryError::MissingUsage(record.id));
        }
        append_ordered(&mut self.history, record)
    }

    pub fn push_inbound(&mut self, record: MessageRecord) -> Result<(), MemoryError> {
        if record.direction != Direction::Inbound {
            return Err(MemoryError::WrongDirection(record.id));
        }
        append_ordered(&mut self.inbound, record)
    }

    /// Both logs merged oldest first; ties broken by conversation position.
    pub fn conversation(&self) -> Vec<&MessageRecord> {
        let mut all: Vec<&MessageRecord> = self.history.iter().chain(&self.inbound).collect();
        all.sort_by_key(|m| (m.timestamp, m.seq));
        all
    }

    pub fn find(&self, id: &MessageId) -> Option<&MessageRecord> {
        self.history.iter().chain(&self.inbound).find(|m| &m.id == id)
    }

    /// Number of sequence steps already sent.
    pub fn steps_sent(&self) -> u32 {
        self.history.iter().filter(|m| m.step_index.is_some()).count() as u32
    }
}

fn append_ordered(log: &mut Vec<MessageRecord>, record: MessageRecord) -> Result<(), MemoryError> {
    if let Some(last) = log.last() {
        if record.timestamp < last.timestamp {
            return Err(MemoryError::OutOfOrder {
                id: record.id,
                direction: record.direction,
                at: record.timestamp,
                last: last.timestamp,
            });
        }
    }
    log.push(record);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(seq: u32, direction: Direction, t: i64) -> MessageRecord {
        MessageRecord {
            id: format!("l1/{seq}").into(),
            seq,
            direction,
            channel: Channel::Email,
            step_index: None,
            subject: None,
            body: format!("body {seq}"),
            timestamp: Timestamp(t),
            model_backend: None,
            usage: None,
        }
    }

    #[test]
    fn conversation_interleaves_by_time() {
        let mut mem = AgentMemory::new("l1".into());
        mem.push_outbound(msg(0, Direction::Outbound, 0)).unwrap();
        mem.push_inbound(msg(1, Direction::Inbound, 50)).unwrap();
        mem.push_outbound(msg(2, Direction::Outbound, 50)).unwrap();
        let bodies: Vec<_> = mem.conversation().iter().map(|m| m.body.as_str()).collect();
        assert_eq!(bodies, ["body 0", "body 1", "body 2"]);
    }

    #[test]
    fn out_of_order_append_rejected() {
        let mut mem = AgentMemory::new("l1".into());
        mem.push_outbound(msg(0, Direction::Outbound, 10)).unwrap();
        assert!(matches!(
            mem.push_outbound(msg(1, Direction::Outbound, 5)),
            Err(MemoryError::OutOfOrder { .. })
        ));
        assert_eq!(mem.history.len(), 1);
    }

    #[test]
    fn backend_without_usage_rejected() {
        let mut mem = AgentMemory::new("l1".into());
        let mut m = msg(0, Direction::Outbound, 0);
        m.model_backend = Some("gpt-4o".into());
        assert_eq!(mem.push_outbound(m), Err(MemoryError::MissingUsage("l1/0".into())));
    }
}
