mod common;

use std::sync::Arc;

use common::*;
use minilab_core::{CandidateId, Timestamp};
use minilab_engine::curation::*;

fn ctx() -> PromptContext {
    PromptContext {
        campaign_id: Some("camp-1".into()),
        value_proposition: "faster invoicing".into(),
        pain_points: vec!["manual entry".into()],
        research_goals: vec!["funding".into()],
        dossier_excerpt: "Acme raised $12M in March 2024.".into(),
        instructions: "Write like a human.".into(),
    }
}

fn decision(reviewer: &str, verdict: Verdict, t: i64) -> ReviewDecision {
    ReviewDecision {
        reviewer_id: reviewer.into(),
        verdict,
        edited_text: (verdict == Verdict::AcceptWithEdit).then(|| "edited body".to_owned()),
        quality: 4,
        relevance: 4,
        accuracy: 5,
        decided_at: Timestamp(t),
        version: 1,
    }
}

#[test]
fn job_generates_n_candidates() {
    let client = Scripted::numbered();
    let store = CurationStore::new(client.clone());
    let job = store.enqueue_job(ctx(), "teacher", 3, Timestamp(0)).unwrap();
    assert_eq!(job.candidate_ids.len(), 3);
    assert_eq!(job.status, JobStatus::Generated);
    assert!(job.failures.is_empty());
    assert_eq!(store.candidates().len(), 3);
    assert!(store.candidates().iter().all(|c| c.usage.prompt_tokens == 1000));
    let prompt = client.prompts.lock().unwrap()[0].clone();
    assert_eq!(prompt.messages[0].content, ctx().instruction());
    assert_eq!(prompt.messages[1].content, ctx().input());
}

#[test]
fn failed_generation_is_partial() {
    let store = CurationStore::new(Scripted::failing_on(&[2]));
    let job = store.enqueue_job(ctx(), "teacher", 3, Timestamp(0)).unwrap();
    assert_eq!(job.candidate_ids.len(), 2);
    assert_eq!(job.failures.len(), 1);
    assert_eq!(job.failures[0].index, 1);
    assert_eq!(job.failures[0].code, "EXHAUSTED_RETRIES");
}

#[test]
fn zero_candidates_rejected() {
    let store = CurationStore::new(Scripted::numbered());
    assert_eq!(store.enqueue_job(ctx(), "teacher", 0, Timestamp(0)).unwrap_err().code(), "INVALID_COUNT");
}

#[test]
fn accept_and_edit_produce_gold() {
    let store = CurationStore::new(Scripted::numbered());
    let job = store.enqueue_job(ctx(), "teacher", 2, Timestamp(0)).unwrap();
    let c0 = store.submit_decision(&job.candidate_ids[0], decision("r1", Verdict::Accept, 10)).unwrap();
    store.submit_decision(&job.candidate_ids[1], decision("r2", Verdict::AcceptWithEdit, 20)).unwrap();
    let gold = store.gold_pairs();
    assert_eq!(gold.len(), 2);
    assert_eq!(gold[0].output, c0.text);
    assert!(!gold[0].meta.edited);
    assert_eq!(gold[1].output, "edited body");
    assert!(gold[1].meta.edited);
    assert_eq!(gold[1].meta.decided_at, "1970-01-01T00:00:20Z");
    assert_eq!(store.job(&job.id).unwrap().status, JobStatus::Reviewed);
}

#[test]
fn decisions_are_validated() {
    let store = CurationStore::new(Scripted::numbered());
    let job = store.enqueue_job(ctx(), "teacher", 1, Timestamp(0)).unwrap();
    let id = &job.candidate_ids[0];
    let mut d = decision("r", Verdict::Accept, 1);
    d.version = 2;
    assert_eq!(store.submit_decision(id, d).unwrap_err().code(), "INVALID_DECISION");
    let mut d = decision("r", Verdict::AcceptWithEdit, 1);
    d.edited_text = None;
    assert_eq!(store.submit_decision(id, d).unwrap_err().code(), "INVALID_DECISION");
    let mut d = decision("r", Verdict::Reject, 1);
    d.edited_text = Some("x".into());
    assert_eq!(store.submit_decision(id, d).unwrap_err().code(), "INVALID_DECISION");
    let mut d = decision("r", Verdict::Accept, 1);
    d.quality = 6;
    assert_eq!(store.submit_decision(id, d).unwrap_err().code(), "INVALID_DECISION");
    assert_eq!(store.submit_decision(&CandidateId::from("cand-999999"), decision("r", Verdict::Accept, 1)).unwrap_err().code(), "UNKNOWN_CANDIDATE");
    assert!(store.candidate(id).unwrap().decision.is_none());
}

#[test]
fn concurrent_decisions_first_wins() {
    for _ in 0..50 {
        let store = Arc::new(CurationStore::new(Scripted::numbered()));
        let job = store.enqueue_job(ctx(), "teacher", 1, Timestamp(0)).unwrap();
        let id = job.candidate_ids[0].clone();
        let barrier = Arc::new(std::sync::Barrier::new(2));
        let results: Vec<_> = std::thread::scope(|s| {
            let hs: Vec<_> = ["alice", "bob"]
                .into_iter()
                .map(|who| {
                    let (store, id, barrier) = (store.clone(), id.clone(), barrier.clone());
                    s.spawn(move || {
                        barrier.wait();
                        store.submit_decision(&id, decision(who, Verdict::Accept, 5))
                    })
                })
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let wins = results.iter().filter(|r| r.is_ok()).count();
        assert_eq!(wins, 1);
        let winner = results.iter().find_map(|r| r.as_ref().ok()).unwrap().decision.clone().unwrap();
        match results.iter().find_map(|r| r.as_ref().err()).unwrap() {
            CurationError::AlreadyDecided { stored, .. } => assert_eq!(**stored, winner),
            other => panic!("unexpected {other}"),
        }
        assert_eq!(store.gold_pairs().len(), 1);
    }
}

#[test]
fn export_counts_and_rate() {
    let store = CurationStore::new(Scripted::numbered());
    let job = store.enqueue_job(ctx(), "teacher", 10, Timestamp(0)).unwrap();
    for (i, id) in job.candidate_ids.iter().enumerate().take(8) {
        let v = if i < 5 { Verdict::Accept } else { Verdict::Reject };
        store.submit_decision(id, decision(if i % 2 == 0 { "r1" } else { "r2" }, v, 100 - i as i64)).unwrap();
    }
    let ex = store.export_gold(&ExportFilter::default());
    assert_eq!(ex.jsonl.lines().count(), 5);
    assert_eq!(ex.manifest.count, 5);
    assert_eq!(ex.manifest.decided, 8);
    assert_eq!(ex.manifest.accept_rate, Some(0.625));
    assert_eq!(ex.manifest.reviewers.values().sum::<u64>(), 5);
    let times: Vec<String> = ex.jsonl.lines().map(|l| serde_json::from_str::<GoldPair>(l).unwrap().meta.decided_at).collect();
    let mut sorted = times.clone();
    sorted.sort();
    assert_eq!(times, sorted);
    assert_eq!(store.export_gold(&ExportFilter::default()), ex);

    let none = store.export_gold(&ExportFilter { teacher_backend: Some("other".into()), ..Default::default() });
    assert_eq!((none.manifest.count, none.jsonl.as_str()), (0, ""));
    let early = store.export_gold(&ExportFilter { decided_until: Some(Timestamp(97)), ..Default::default() });
    assert_eq!(early.manifest.decided, 4);
}

#[test]
fn empty_store_exports_nothing() {
    let store = CurationStore::new(Scripted::numbered());
    let ex = store.export_gold(&ExportFilter::default());
    assert_eq!(ex.manifest.count, 0);
    assert!(ex.jsonl.is_empty());
    assert_eq!(ex.manifest.accept_rate, None);
    let dir = tempfile::tempdir().unwrap();
    ex.write_to(dir.path()).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("gold.jsonl")).unwrap(), "");
}

#[test]
fn stats_track_the_queue() {
    let store = CurationStore::new(Scripted::numbered());
    assert_eq!(store.queue_stats(), QueueStats::default());
    let job = store.enqueue_job(ctx(), "teacher", 4, Timestamp(0)).unwrap();
    assert_eq!(store.queue_stats().pending_review, 4);
    for (i, q) in [5u8, 4, 3].into_iter().enumerate() {
        let mut d = decision("r1", Verdict::Accept, i as i64);
        d.quality = q;
        let before = store.queue_stats().pending_review;
        store.submit_decision(&job.candidate_ids[i], d).unwrap();
        assert_eq!(store.queue_stats().pending_review, before - 1);
    }
    let s = store.queue_stats();
    assert_eq!(s.mean_quality, 4.0);
    assert_eq!(s.per_reviewer["r1"], 3);
    let q = store.review_queue(10);
    assert_eq!(q.len(), 1);
    assert_eq!(q[0].candidate_id, job.candidate_ids[3]);
}

#[test]
fn queue_is_oldest_first() {
    let store = CurationStore::new(Scripted::numbered());
    store.enqueue_job(ctx(), "teacher", 2, Timestamp(50)).unwrap();
    store.enqueue_job(ctx(), "teacher", 1, Timestamp(10)).unwrap();
    let q = store.review_queue(3);
    assert_eq!(q.iter().map(|i| i.created_at.0).collect::<Vec<_>>(), [10, 50, 50]);
    assert_eq!(store.review_queue(1).len(), 1);
}

#[test]
fn journal_round_trip_and_immutability() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curation.jsonl");
    let store = CurationStore::open(&path, Scripted::numbered()).unwrap();
    let job = store.enqueue_job(ctx(), "teacher", 3, Timestamp(0)).unwrap();
    store.submit_decision(&job.candidate_ids[0], decision("r1", Verdict::AcceptWithEdit, 3)).unwrap();
    store.submit_decision(&job.candidate_ids[1], decision("r1", Verdict::Reject, 4)).unwrap();
    let snapshot = store.candidates();
    drop(store);

    let reopened = CurationStore::open(&path, Scripted::numbered()).unwrap();
    assert_eq!(reopened.candidates(), snapshot);
    assert!(reopened.submit_decision(&job.candidate_ids[0], decision("r2", Verdict::Reject, 9)).is_err());
    assert_eq!(reopened.candidate(&job.candidate_ids[0]).unwrap(), snapshot[0]);
    let job2 = reopened.enqueue_job(ctx(), "teacher", 1, Timestamp(5)).unwrap();
    assert_eq!(job2.id.as_str(), "job-000002");
    assert_eq!(job2.candidate_ids[0].as_str(), "cand-000004");
}
