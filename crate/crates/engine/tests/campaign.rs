mod common;

use common::*;
use minilab_core::domain::{EngagementEvent, EventKind};
use minilab_core::{ArmId, LeadId, Timestamp};
use minilab_engine::audit::audit_log;
use minilab_engine::*;

const T0: Timestamp = Timestamp(0);

fn campaign(delays: &[u64]) -> Campaign {
    Campaign::create(spec_with_delays(delays), T0, deps(Scripted::numbered()), None).unwrap()
}

#[test]
fn create_stores_one_draft_per_arm() {
    let c = Campaign::create(spec_with_delays(&[0, 3 * DAY, 4 * DAY, 4 * DAY]), T0, deps(Scripted::fixed("Hello {name}")), None).unwrap();
    assert!(c.state().leads.is_empty());
    assert_eq!(c.state().initial_drafts.len(), 2);
    for d in &c.state().initial_drafts {
        match &d.status {
            DraftStatus::Ready { body, .. } => assert_eq!(body, "Hello {name}"),
            other => panic!("draft not ready: {other:?}"),
        }
    }
}

#[test]
fn create_rejects_empty_sequence() {
    let err = Campaign::create(spec_with_delays(&[]), T0, deps(Scripted::numbered()), None).unwrap_err();
    assert_eq!(err.code(), "EMPTY_SEQUENCE");
}

#[test]
fn gateway_failure_leaves_draft_pending_then_retries() {
    let c = Campaign::create(spec_with_delays(&[0]), T0, deps(Scripted::failing()), None).unwrap();
    assert!(c.state().initial_drafts.iter().all(|d| matches!(d.status, DraftStatus::Pending { .. })));

    let client = Scripted::failing_on(&[1]);
    let mut c = Campaign::create(spec_with_delays(&[DAY]), T0, deps(client), None).unwrap();
    assert!(matches!(c.state().initial_drafts[0].status, DraftStatus::Pending { .. }));
    assert!(matches!(c.state().initial_drafts[1].status, DraftStatus::Ready { .. }));
    c.tick(T0).unwrap();
    assert!(c.state().initial_drafts.iter().all(|d| matches!(d.status, DraftStatus::Ready { .. })));
}

#[test]
fn add_lead_schedules_first_step() {
    let mut c = campaign(&[0, DAY]);
    let a = c.add_lead(lead("l1", "a"), T0).unwrap();
    assert_eq!(a.due, Timestamp(0));
    assert_eq!(a.kind, ActionKind::SendStep(0));
    let mut c = campaign(&[DAY]);
    assert_eq!(c.add_lead(lead("l1", "a"), T0).unwrap().due, Timestamp(86_400));
    let l = c.lead(&"l1".into()).unwrap();
    assert_eq!((l.cursor, l.next_due), (Cursor::Step(0), Some(Timestamp(86_400))));
    assert_eq!(c.add_lead(lead("l1", "b"), T0).unwrap_err().code(), "DUPLICATE_LEAD");
    assert_eq!(c.add_lead(lead("l2", "zzz"), T0).unwrap_err().code(), "UNKNOWN_ARM");
}

#[test]
fn never_sends_before_due() {
    let mut c = campaign(&[0, 2 * DAY]);
    c.add_lead(lead("l1", "a"), T0).unwrap();
    let sent = c.tick(Timestamp(DAY as i64)).unwrap();
    assert_eq!(sent.len(), 1);
    assert_eq!(sent[0].step_index, Some(0));
    assert_eq!(c.lead(&"l1".into()).unwrap().cursor, Cursor::Step(1));
}

#[test]
fn two_ticks_send_both_steps_in_order() {
    let mut c = campaign(&[0, 2 * DAY]);
    c.add_lead(lead("l1", "a"), T0).unwrap();
    assert_eq!(c.tick(T0).unwrap().len(), 1);
    assert_eq!(c.tick(Timestamp(2 * DAY as i64)).unwrap().len(), 1);
    let l = c.lead(&"l1".into()).unwrap();
    let steps: Vec<_> = l.memory.history.iter().map(|m| m.step_index).collect();
    assert_eq!(steps, [Some(0), Some(1)]);
    assert_eq!(l.memory.history[1].timestamp, Timestamp(2 * DAY as i64));
    assert_eq!((l.cursor, l.next_due), (Cursor::Done, None));
    assert!(c.tick(Timestamp(10 * DAY as i64)).unwrap().is_empty());
}

#[test]
fn email_steps_get_subjects_from_the_draft() {
    let mut c = Campaign::create(spec_with_delays(&[0, 0]), T0, deps(Scripted::fixed("Subject: Quick one\n\nHi there")), None).unwrap();
    c.add_lead(lead("l1", "a"), T0).unwrap();
    let sent = c.tick(T0).unwrap();
    assert_eq!(sent.len(), 2, "zero delay sends the follow-up in the same tick");
    assert_eq!(sent[0].subject.as_deref(), Some("Quick one"));
    assert_eq!(sent[0].body, "Hi there");
    assert_eq!(sent[1].subject, None, "linkedin step has no subject");
}

fn event(lead: &str, kind: EventKind, t: i64, msg: &str) -> EngagementEvent {
    let mut e = EngagementEvent::new(lead.into(), kind, Timestamp(t), msg.into());
    if kind == EventKind::Reply {
        e.body = Some("Sounds interesting, tell me more".into());
    }
    e
}

#[test]
fn reply_pauses_and_cancels_pending_step() {
    let mut c = campaign(&[0, 2 * DAY, 2 * DAY]);
    c.add_lead(lead("l1", "a"), T0).unwrap();
    c.tick(T0).unwrap();
    assert_eq!(c.state().pending_actions()[0].kind, ActionKind::SendStep(1));
    c.ingest_event(event("l1", EventKind::Reply, 3600, "l1/0")).unwrap();
    let l = c.lead(&"l1".into()).unwrap();
    assert_eq!((l.cursor, l.next_due), (Cursor::PausedForReply, None));
    let actions = c.state().pending_actions();
    assert_eq!(actions.len(), 1);
    assert_eq!(actions[0].kind, ActionKind::SendReply);
    assert_eq!(actions[0].due, Timestamp(3600));
    assert_eq!(l.memory.inbound.len(), 1);
}

#[test]
fn draft_reply_resumes_at_next_step() {
    let client = Scripted::numbered();
    let mut c = Campaign::create(spec_with_delays(&[0, 2 * DAY]), T0, deps(client.clone()), None).unwrap();
    c.add_lead(lead("l1", "a"), T0).unwrap();
    c.tick(T0).unwrap();
    c.ingest_event(event("l1", EventKind::Reply, 7200, "l1/0")).unwrap();
    let reply = c.draft_reply(&"l1".into(), Timestamp(7200)).unwrap();
    assert_eq!(reply.step_index, None);
    let l = c.lead(&"l1".into()).unwrap();
    assert_eq!(l.cursor, Cursor::Step(1));
    assert_eq!(l.next_due, Some(Timestamp(7200 + 2 * DAY as i64)));

    let prompt = client.prompts.lock().unwrap().last().unwrap().clone();
    let all: String = prompt.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
    assert!(all.contains("Sounds interesting, tell me more"));
}

#[test]
fn draft_reply_needs_a_pending_reply() {
    let mut c = campaign(&[0]);
    c.add_lead(lead("l1", "a"), T0).unwrap();
    c.tick(T0).unwrap();
    assert_eq!(c.lead(&"l1".into()).unwrap().cursor, Cursor::Done);
    assert_eq!(c.draft_reply(&"l1".into(), T0).unwrap_err().code(), "WRONG_STATE");
}

#[test]
fn reply_prompt_holds_full_history_in_time_order() {
    let client = Scripted::numbered();
    let mut c = Campaign::create(spec_with_delays(&[0, DAY, DAY]), T0, deps(client.clone()), None).unwrap();
    c.add_lead(lead("l1", "a"), T0).unwrap();
    c.tick(T0).unwrap();
    c.tick(Timestamp(DAY as i64)).unwrap();
    c.ingest_event(event("l1", EventKind::Reply, DAY as i64 + 60, "l1/1")).unwrap();
    c.tick(Timestamp(DAY as i64 + 60)).unwrap();
    let prompt = client.prompts.lock().unwrap().last().unwrap().clone();
    let all: String = prompt.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
    let first = all.find("draft 3").expect("step 0 body");
    let second = all.find("draft 4").expect("step 1 body");
    let inbound = all.find("Sounds interesting").expect("reply body");
    assert!(first < second && second < inbound);
    assert_eq!(prompt.messages[0].role, minilab_gateway::Role::System);
    assert!(prompt.messages[0].content.starts_with("Be concise and specific."));
}

#[test]
fn unsubscribe_stops_everything() {
    let mut c = campaign(&[0, DAY, DAY]);
    c.add_lead(lead("l1", "a"), T0).unwrap();
    c.tick(T0).unwrap();
    c.ingest_event(event("l1", EventKind::Unsubscribe, 10, "l1/0")).unwrap();
    assert_eq!(c.lead(&"l1".into()).unwrap().cursor, Cursor::Done);
    for k in 1..=10 {
        assert!(c.tick(Timestamp(k * DAY as i64)).unwrap().is_empty());
    }
    c.ingest_event(event("l1", EventKind::Reply, 11 * DAY as i64, "l1/0")).unwrap();
    assert!(c.tick(Timestamp(12 * DAY as i64)).unwrap().is_empty(), "a reply never reopens an unsubscribed lead");
    assert_eq!(c.lead(&"l1".into()).unwrap().memory.history.len(), 1);
}

#[test]
fn duplicate_open_only_touches_event_store_once() {
    let mut c = campaign(&[0, DAY]);
    c.add_lead(lead("l1", "a"), T0).unwrap();
    c.tick(T0).unwrap();
    assert!(c.ingest_event(event("l1", EventKind::Open, 5, "l1/0")).unwrap());
    let before = c.state().clone();
    assert!(!c.ingest_event(event("l1", EventKind::Open, 9, "l1/0")).unwrap());
    assert_eq!(c.state(), &before);
    assert_eq!(c.state().events.len(), 1);
}

#[test]
fn events_must_reference_known_messages() {
    let mut c = campaign(&[0]);
    c.add_lead(lead("l1", "a"), T0).unwrap();
    assert_eq!(c.ingest_event(event("zz", EventKind::Open, 0, "zz/0")).unwrap_err().code(), "UNKNOWN_LEAD");
    assert_eq!(c.ingest_event(event("l1", EventKind::Open, 0, "l1/0")).unwrap_err().code(), "UNKNOWN_MESSAGE");
}

#[test]
fn failures_back_off_then_flag_the_lead() {
    let mut c = Campaign::create(spec_with_delays(&[0]), T0, deps(Scripted::failing()), None).unwrap();
    c.add_lead(lead("l1", "a"), T0).unwrap();
    let mut t = 0i64;
    let mut dues = Vec::new();
    for _ in 0..5 {
        assert!(c.tick(Timestamp(t)).unwrap().is_empty());
        let l = c.lead(&"l1".into()).unwrap();
        match l.next_due {
            Some(d) => {
                dues.push(d.0 - t);
                t = d.0;
            }
            None => break,
        }
    }
    assert_eq!(dues, [30, 60, 120, 240]);
    assert_eq!(c.lead(&"l1".into()).unwrap().cursor, Cursor::Failed);
}

#[test]
fn transient_failure_is_retried_not_skipped() {
    // Calls 1-2 are the initial drafts; call 3 is the first step attempt.
    let mut c = Campaign::create(spec_with_delays(&[0, DAY]), T0, deps(Scripted::failing_on(&[3])), None).unwrap();
    c.add_lead(lead("l1", "a"), T0).unwrap();
    assert!(c.tick(T0).unwrap().is_empty());
    let sent = c.tick(Timestamp(30)).unwrap();
    assert_eq!(sent[0].step_index, Some(0));
    assert_eq!(c.lead(&"l1".into()).unwrap().next_due, Some(Timestamp(30 + DAY as i64)));
}

#[test]
fn paused_arm_sends_nothing_until_resumed() {
    let mut c = campaign(&[0, DAY]);
    c.add_lead(lead("la", "a"), T0).unwrap();
    c.add_lead(lead("lb", "b"), T0).unwrap();
    c.pause_arm(&ArmId::from("a")).unwrap();
    let sent = c.tick(T0).unwrap();
    assert_eq!(sent.len(), 1);
    assert!(sent[0].id.as_str().starts_with("lb/"));
    assert!(c.tick(Timestamp(5 * DAY as i64)).unwrap().iter().all(|m| m.id.as_str().starts_with("lb/")));
    assert_eq!(c.lead(&"la".into()).unwrap().cursor, Cursor::Step(0));
    c.resume_arm(&ArmId::from("a")).unwrap();
    let sent = c.tick(Timestamp(5 * DAY as i64)).unwrap();
    assert_eq!(sent.len(), 1, "resumes from the stored cursor: step 0 now, step 1 a day later");
    assert_eq!(c.tick(Timestamp(6 * DAY as i64)).unwrap().len(), 1);
    assert_eq!(c.pause_arm(&ArmId::from("nope")).unwrap_err().code(), "UNKNOWN_ARM");
}

#[test]
fn journal_replays_to_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("camp-1.jsonl");
    let spec = spec_with_delays(&[0, DAY, 2 * DAY]);
    let mut c = Campaign::create(spec.clone(), T0, deps(Scripted::numbered()), Some(Journal::open(&path).unwrap())).unwrap();
    c.add_lead(lead("l1", "a"), T0).unwrap();
    c.add_lead(lead("l2", "b"), T0).unwrap();
    c.tick(T0).unwrap();
    c.ingest_event(event("l1", EventKind::Open, 100, "l1/0")).unwrap();
    c.ingest_event(event("l2", EventKind::Reply, 200, "l2/0")).unwrap();
    c.tick(Timestamp(DAY as i64)).unwrap();
    c.pause_arm(&ArmId::from("b")).unwrap();
    c.tick(Timestamp(4 * DAY as i64)).unwrap();

    let mut reopened = Campaign::open(&path, deps(Scripted::failing())).unwrap();
    assert_eq!(reopened.state(), c.state());
    assert!(audit_log(&spec, reopened.log()).is_empty());

    reopened.resume_arm(&ArmId::from("b")).unwrap();
    let again = Campaign::open(&path, deps(Scripted::failing())).unwrap();
    assert!(again.state().paused_arms.is_empty());
    assert_eq!(again.state().leads.len(), 2);
}

#[test]
fn identical_runs_are_identical() {
    let run = || {
        let mut c = campaign(&[0, DAY]);
        for i in 0..5 {
            c.add_lead(lead(&format!("l{i}"), if i % 2 == 0 { "a" } else { "b" }), T0).unwrap();
        }
        c.tick(T0).unwrap();
        c.ingest_event(event("l3", EventKind::Reply, 50, "l3/0")).unwrap();
        c.tick(Timestamp(2 * DAY as i64)).unwrap();
        serde_json::to_string(c.state()).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn costs_come_from_state_usage() {
    let mut c = campaign(&[0, DAY]);
    c.add_lead(lead("l1", "a"), T0).unwrap();
    c.tick(Timestamp(DAY as i64)).unwrap();
    c.tick(Timestamp(2 * DAY as i64)).unwrap();
    let entries = c.state().ledger_entries();
    assert_eq!(entries.iter().filter(|e| e.lead_id == Some(LeadId::from("l1"))).count(), 2);
    assert_eq!(entries.iter().filter(|e| e.lead_id.is_none()).count(), 2);
}
