mod common;

use common::*;
use minilab_core::domain::EventKind;
use minilab_core::Timestamp;
use minilab_engine::audit::{audit_log, audit_memory, run_trace, TraceOp};
use minilab_engine::{Campaign, Cursor};
use proptest::prelude::*;

fn op() -> impl Strategy<Value = TraceOp> {
    let kind = prop_oneof![
        Just(EventKind::Delivered),
        Just(EventKind::Open),
        Just(EventKind::Click),
        Just(EventKind::Reply),
        Just(EventKind::Unsubscribe),
    ];
    prop_oneof![
        2 => Just(TraceOp::AddLead),
        4 => prop_oneof![Just(0u64), 1u64..3_600, 3_600u64..3 * DAY].prop_map(TraceOp::Advance),
        4 => (0usize..8, 0usize..6, kind).prop_map(|(lead, message, kind)| TraceOp::Event { lead, message, kind }),
        1 => (0usize..8).prop_map(|lead| TraceOp::DraftReply { lead }),
        1 => (0usize..2).prop_map(TraceOp::PauseArm),
        1 => (0usize..2).prop_map(TraceOp::ResumeArm),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_traces_keep_the_schedule_safe(ops in prop::collection::vec(op(), 1..60), delays in prop::collection::vec(0u64..2 * DAY, 1..5)) {
        let spec = spec_with_delays(&delays);
        let c = run_trace(spec.clone(), Timestamp(0), &ops, deps(Scripted::numbered())).unwrap();
        let violations = audit_log(&spec, c.log());
        prop_assert!(violations.is_empty(), "{violations:?}");
        let memory = audit_memory(&c);
        prop_assert!(memory.is_empty(), "{memory:?}");

        for l in c.state().leads.values() {
            let due_ok = match l.cursor {
                Cursor::Step(_) => l.next_due.is_some() && l.reply_due.is_none(),
                Cursor::PausedForReply => l.next_due.is_none() && l.reply_due.is_some(),
                Cursor::Done | Cursor::Failed => l.next_due.is_none() && l.reply_due.is_none(),
            };
            prop_assert!(due_ok, "{:?}", l);
            if let Cursor::Step(i) = l.cursor {
                prop_assert!((i as usize) < spec.steps.len());
            }
        }

        let replayed = Campaign::replay(c.log(), deps(Scripted::failing())).unwrap();
        prop_assert_eq!(replayed.state(), c.state());

        let again = run_trace(spec, Timestamp(0), &ops, deps(Scripted::numbered())).unwrap();
        prop_assert_eq!(serde_json::to_vec(again.state()).unwrap(), serde_json::to_vec(c.state()).unwrap());
    }
}

#[test]
fn audit_flags_tampered_logs() {
    use minilab_engine::LogRecord;
    let spec = spec_with_delays(&[0, DAY]);
    let ops = [TraceOp::AddLead, TraceOp::Advance(0), TraceOp::Advance(DAY), TraceOp::Advance(DAY)];
    let c = run_trace(spec.clone(), Timestamp(0), &ops, deps(Scripted::numbered())).unwrap();
    let mut log = c.log().to_vec();
    assert!(audit_log(&spec, &log).is_empty());

    let last_send = log.iter().rposition(|r| matches!(r, LogRecord::Sent { .. })).unwrap();
    if let LogRecord::Sent { message, .. } = &mut log[last_send] {
        message.timestamp = Timestamp(60);
    }
    assert!(audit_log(&spec, &log).iter().any(|v| v.contains("before due")));

    let mut log = c.log().to_vec();
    let first_send = log.iter().position(|r| matches!(r, LogRecord::Sent { .. })).unwrap();
    let unsub = minilab_core::domain::EngagementEvent::new("lead-000".into(), EventKind::Unsubscribe, Timestamp(0), "lead-000/0".into());
    log.insert(first_send + 1, LogRecord::Event { event: unsub });
    assert!(audit_log(&spec, &log).iter().any(|v| v.contains("after unsubscribing")));
}
