use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::domain::{EngagementEvent, EventKind};
use crate::ids::{LeadId, MessageId};

/// Engagement counts and their percentages of delivered messages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub delivered: u64,
    pub opens: u64,
    pub clicks: u64,
    pub replies: u64,
    pub unsubscribes: u64,
    pub open_rate: f64,
    pub ctr: f64,
    pub reply_rate: f64,
    pub unsub_rate: f64,
}

/// Aggregates engagement events into rates against delivered messages.
///
/// Opens, clicks and unsubscribes count once per message; a message that got
/// several replies counts as one replied message. Events about messages with
/// no delivery are ignored. Clicks are not clamped to opens.
pub fn kpi_rates<'a, I>(events: I) -> Result<KpiReport, MetricError>
where
    I: IntoIterator<Item = &'a EngagementEvent>,
{
    let mut seen: [BTreeSet<(&LeadId, &MessageId)>; 5] = Default::default();
    for e in events {
        let slot = match e.kind {
            EventKind::Delivered => 0,
            EventKind::Open => 1,
            EventKind::Click => 2,
            EventKind::Reply => 3,
            EventKind::Unsubscribe => 4,
        };
        seen[slot].insert((&e.lead_id, &e.message_ref));
    }
    let delivered = seen[0].len() as u64;
    if delivered == 0 {
        return Err(MetricError::NoDeliveries);
    }
    let count = |slot: usize| seen[slot].iter().filter(|k| seen[0].contains(*k)).count() as u64;
    let (opens, clicks, replies, unsubscribes) = (count(1), count(2), count(3), count(4));
    let rate = |n: u64| 100.0 * n as f64 / delivered as f64;
    Ok(KpiReport {
        delivered,
        opens,
        clicks,
        replies,
        unsubscribes,
        open_rate: rate(opens),
        ctr: rate(clicks),
        reply_rate: rate(replies),
        unsub_rate: rate(unsubscribes),
    })
}
