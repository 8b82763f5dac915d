use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};
use relabel_core::loop_engine::PredictionSource;
use relabel_core::review::RoundStats;
use relabel_core::{
    jsonl, Choice, DatasetVersion, DetectorConfig, Item, Label, LabelSource, Payload, Prediction, RelabelLoop,
    ReviewDecision, ReviewMode, ReviewTask, Span, Split, TaskKind,
};
use relabel_server::{serve_on, AppState, Clock};
use reqwest::StatusCode;

const T0: i64 = 1_700_000_000;

/// Manual clock, in seconds since the epoch.
fn manual_clock() -> (Clock, Arc<AtomicI64>) {
    let secs = Arc::new(AtomicI64::new(T0));
    let handle = secs.clone();
    (Arc::new(move || Utc.timestamp_opt(handle.load(Ordering::SeqCst), 0).unwrap()), secs)
}

/// A classification store with `n` train items, all contradicted by the
/// model, plus two dev items the model also contradicts.
fn store(root: &Path, n: usize, mode: ReviewMode) {
    let mut items: Vec<Item> = (0..n)
        .map(|i| Item::new(format!("t{i:02}"), Split::Train, Payload::Text(format!("doc {i}")), Label::Class("A".into()), LabelSource::Human))
        .collect();
    items.push(Item::new("d0", Split::Dev, Payload::Text("dev".into()), Label::Class("A".into()), LabelSource::Human));
    items.push(Item::new("d1", Split::Dev, Payload::Text("dev".into()), Label::Class("A".into()), LabelSource::Human));
    let v = DatasetVersion::new_root(TaskKind::Classification, items).unwrap();
    let preds = v
        .items()
        .iter()
        .map(|i| Prediction {
            item_id: i.id.clone(),
            value: Label::Class("B".into()),
            score: Some(0.8),
            model_id: "m".into(),
            round: 1,
        })
        .collect();
    let mut lp = RelabelLoop::init(root, v).unwrap();
    lp.set_review_mode(mode);
    lp.run_round(PredictionSource::External(preds), &DetectorConfig::new(TaskKind::Classification))
        .unwrap();
}

async fn spawn(state: AppState) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve_on(listener, state));
    format!("http://{addr}/api/v1")
}

fn decision(item: &str, who: &str, choice: Choice, at: i64) -> ReviewDecision {
    ReviewDecision {
        item_id: item.into(),
        round: 1,
        annotator_id: who.into(),
        choice,
        submitted_at: at_secs(at),
    }
}

fn at_secs(s: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(T0 + s, 0).unwrap()
}

async fn next(c: &reqwest::Client, base: &str, who: &str) -> Option<ReviewTask> {
    let r = c.get(format!("{base}/queue/next")).query(&[("annotator", who)]).send().await.unwrap();
    match r.status() {
        StatusCode::NO_CONTENT => None,
        StatusCode::OK => Some(r.json().await.unwrap()),
        s => panic!("unexpected {s}"),
    }
}

async fn post(c: &reqwest::Client, base: &str, d: &ReviewDecision) -> StatusCode {
    c.post(format!("{base}/decision")).json(d).send().await.unwrap().status()
}

async fn stats(c: &reqwest::Client, base: &str, round: u32) -> RoundStats {
    c.get(format!("{base}/rounds/{round}/stats")).send().await.unwrap().json().await.unwrap()
}

#[tokio::test]
async fn fresh_queue_serves_position_zero_then_distinct_tasks() {
    let dir = tempfile::tempdir().unwrap();
    store(dir.path(), 3, ReviewMode::Open);
    let (clock, _) = manual_clock();
    let base = spawn(AppState::load(dir.path(), clock).unwrap()).await;
    let c = reqwest::Client::new();
    let a = next(&c, &base, "ann-a").await.unwrap();
    assert_eq!(a.queue_position, 0);
    assert_eq!(a.previous_human_label, Label::Class("A".into()));
    assert_eq!(a.model_reference, Label::Class("B".into()));
    // a repeated call by the same annotator returns the held task
    assert_eq!(next(&c, &base, "ann-a").await.unwrap().item_id, a.item_id);
    let b = next(&c, &base, "ann-b").await.unwrap();
    assert_ne!(a.item_id, b.item_id);
    let s = stats(&c, &base, 1).await;
    assert_eq!((s.queued, s.leased, s.decided, s.remaining), (3, 2, 0, 1));
}

#[tokio::test]
async fn concurrent_annotators_never_share_a_task() {
    let dir = tempfile::tempdir().unwrap();
    store(dir.path(), 12, ReviewMode::Open);
    let (clock, _) = manual_clock();
    let base = spawn(AppState::load(dir.path(), clock).unwrap()).await;
    let c = reqwest::Client::new();
    let handles: Vec<_> = (0..20)
        .map(|k| {
            let (c, base) = (c.clone(), base.clone());
            tokio::spawn(async move { next(&c, &base, &format!("ann-{k}")).await })
        })
        .collect();
    let mut served = Vec::new();
    for h in handles {
        if let Some(t) = h.await.unwrap() {
            served.push(t.item_id);
        }
    }
    let distinct: BTreeSet<_> = served.iter().collect();
    assert_eq!(served.len(), 12);
    assert_eq!(distinct.len(), 12);
    assert!(served.iter().all(|id| id.starts_with('t')));
}

#[tokio::test]
async fn expired_lease_is_offered_again() {
    let dir = tempfile::tempdir().unwrap();
    store(dir.path(), 1, ReviewMode::Open);
    let (clock, secs) = manual_clock();
    let base = spawn(AppState::load(dir.path(), clock).unwrap()).await;
    let c = reqwest::Client::new();
    let first = next(&c, &base, "ann-a").await.unwrap();
    assert!(next(&c, &base, "ann-b").await.is_none());
    // the holder of a live lease blocks other submitters
    let blocked = decision(&first.item_id, "ann-b", Choice::AcceptModel, 1);
    assert_eq!(post(&c, &base, &blocked).await, StatusCode::CONFLICT);
    secs.fetch_add(10 * 60, Ordering::SeqCst);
    let again = next(&c, &base, "ann-b").await.unwrap();
    assert_eq!(again.item_id, first.item_id);
    let late = decision(&first.item_id, "ann-a", Choice::KeepPrevious, 2);
    assert_eq!(post(&c, &base, &late).await, StatusCode::CONFLICT);
}

#[tokio::test]
async fn identical_submissions_are_stored_once() {
    let dir = tempfile::tempdir().unwrap();
    store(dir.path(), 4, ReviewMode::Open);
    let (clock, _) = manual_clock();
    let base = spawn(AppState::load(dir.path(), clock).unwrap()).await;
    let c = reqwest::Client::new();
    let task = next(&c, &base, "ann-a").await.unwrap();
    let d = decision(&task.item_id, "ann-a", Choice::AcceptModel, 5);
    let first = c.post(format!("{base}/decision")).json(&d).send().await.unwrap();
    assert_eq!(first.status(), StatusCode::OK);
    let ack: relabel_server::Ack = first.json().await.unwrap();
    assert_eq!(ack.outcome, relabel_core::review::SubmitOutcome::Recorded);
    let second = c.post(format!("{base}/decision")).json(&d).send().await.unwrap();
    assert_eq!(second.status(), StatusCode::OK);
    let ack: relabel_server::Ack = second.json().await.unwrap();
    assert_eq!(ack.outcome, relabel_core::review::SubmitOutcome::Duplicate);
    let log: Vec<ReviewDecision> = jsonl::read_records(&dir.path().join("round-1/review-log.jsonl")).unwrap();
    assert_eq!(log, vec![d]);
    let s = stats(&c, &base, 1).await;
    assert_eq!((s.queued, s.leased, s.decided, s.remaining), (4, 0, 1, 3));
}

#[tokio::test]
async fn invalid_requests_are_unprocessable() {
    let dir = tempfile::tempdir().unwrap();
    store(dir.path(), 2, ReviewMode::Choice);
    let (clock, _) = manual_clock();
    let base = spawn(AppState::load(dir.path(), clock).unwrap()).await;
    let c = reqwest::Client::new();
    let unknown = decision("nope", "ann-a", Choice::AcceptModel, 0);
    assert_eq!(post(&c, &base, &unknown).await, StatusCode::UNPROCESSABLE_ENTITY);
    let dev = decision("d0", "ann-a", Choice::AcceptModel, 0);
    assert_eq!(post(&c, &base, &dev).await, StatusCode::UNPROCESSABLE_ENTITY);
    // choice mode admits only the two reference options
    let free = decision("t00", "ann-a", Choice::NewLabel(Label::Class("C".into())), 0);
    assert_eq!(post(&c, &base, &free).await, StatusCode::UNPROCESSABLE_ENTITY);
    let garbage = c
        .post(format!("{base}/decision"))
        .header("content-type", "application/json")
        .body("{\"item_id\": 3}")
        .send()
        .await
        .unwrap();
    assert_eq!(garbage.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let missing = c.get(format!("{base}/queue/next")).send().await.unwrap();
    assert_eq!(missing.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let stale = ReviewDecision { round: 7, ..decision("t00", "ann-a", Choice::AcceptModel, 0) };
    assert_eq!(post(&c, &base, &stale).await, StatusCode::CONFLICT);
    let unknown_round = c.get(format!("{base}/rounds/9/stats")).send().await.unwrap();
    assert_eq!(unknown_round.status(), StatusCode::NOT_FOUND);
    assert_eq!(stats(&c, &base, 1).await.decided, 0);
}

#[tokio::test]
async fn overlapping_spans_in_a_new_label_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let items = vec![Item::new(
        "x",
        Split::Train,
        Payload::Text("a b c d".into()),
        Label::Spans(vec![Span::new(0, 1, "E")]),
        LabelSource::Human,
    )];
    let v = DatasetVersion::new_root(TaskKind::Tagging, items).unwrap();
    let preds = vec![Prediction {
        item_id: "x".into(),
        value: Label::Spans(vec![Span::new(2, 3, "E")]),
        score: None,
        model_id: "m".into(),
        round: 1,
    }];
    let mut lp = RelabelLoop::init(dir.path(), v).unwrap();
    lp.set_review_mode(ReviewMode::Open);
    lp.run_round(PredictionSource::External(preds), &DetectorConfig::new(TaskKind::Tagging))
        .unwrap();
    drop(lp);
    let (clock, _) = manual_clock();
    let base = spawn(AppState::load(dir.path(), clock).unwrap()).await;
    let c = reqwest::Client::new();
    let bad = Label::Spans(vec![Span::new(0, 2, "E"), Span::new(1, 3, "E")]);
    let d = decision("x", "ann-a", Choice::NewLabel(bad), 0);
    assert_eq!(post(&c, &base, &d).await, StatusCode::UNPROCESSABLE_ENTITY);
    let ok = decision("x", "ann-a", Choice::NewLabel(Label::Spans(vec![Span::new(1, 3, "E")])), 0);
    assert_eq!(post(&c, &base, &ok).await, StatusCode::OK);
}

#[tokio::test]
async fn export_resolves_last_write_wins_after_close() {
    let dir = tempfile::tempdir().unwrap();
    store(dir.path(), 3, ReviewMode::Open);
    let (clock, _) = manual_clock();
    let base = spawn(AppState::load(dir.path(), clock).unwrap()).await;
    let c = reqwest::Client::new();
    assert_eq!(post(&c, &base, &decision("t00", "ann-a", Choice::AcceptModel, 10)).await, StatusCode::OK);
    assert_eq!(post(&c, &base, &decision("t00", "ann-b", Choice::KeepPrevious, 20)).await, StatusCode::OK);
    // equal timestamps: the greater annotator id wins
    assert_eq!(post(&c, &base, &decision("t01", "ann-z", Choice::KeepPrevious, 30)).await, StatusCode::OK);
    assert_eq!(post(&c, &base, &decision("t01", "ann-c", Choice::AcceptModel, 30)).await, StatusCode::OK);

    let open = c.get(format!("{base}/rounds/1/export")).send().await.unwrap();
    assert_eq!(open.status(), StatusCode::CONFLICT);
    let closed = c.post(format!("{base}/rounds/1/close")).send().await.unwrap();
    assert_eq!(closed.status(), StatusCode::OK);
    let s: RoundStats = closed.json().await.unwrap();
    assert!(s.closed);
    assert_eq!(post(&c, &base, &decision("t02", "ann-a", Choice::AcceptModel, 40)).await, StatusCode::CONFLICT);
    assert_eq!(next_status(&c, &base).await, StatusCode::CONFLICT);

    let body = c.get(format!("{base}/rounds/1/export")).send().await.unwrap().text().await.unwrap();
    let resolved: Vec<ReviewDecision> = jsonl::parse_records(body.as_bytes(), Path::new("export")).unwrap();
    let mut by_item = resolved.clone();
    by_item.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    assert_eq!(
        by_item,
        vec![
            decision("t00", "ann-b", Choice::KeepPrevious, 20),
            decision("t01", "ann-z", Choice::KeepPrevious, 30),
        ]
    );
    assert!(dir.path().join("round-1/closed").exists());

    // the exported file merges directly into the next version
    let mut lp = RelabelLoop::open(dir.path()).unwrap();
    lp.apply_round(&resolved).unwrap();
    assert_eq!(lp.current_version().get("t00").unwrap().label, Label::Class("A".into()));
}

async fn next_status(c: &reqwest::Client, base: &str) -> StatusCode {
    c.get(format!("{base}/queue/next")).query(&[("annotator", "x")]).send().await.unwrap().status()
}

#[tokio::test]
async fn restart_replays_the_review_log() {
    let dir = tempfile::tempdir().unwrap();
    store(dir.path(), 5, ReviewMode::Open);
    let (clock, _) = manual_clock();
    let base = spawn(AppState::load(dir.path(), clock.clone()).unwrap()).await;
    let c = reqwest::Client::new();
    for (k, item) in ["t00", "t03"].iter().enumerate() {
        assert_eq!(post(&c, &base, &decision(item, "ann-a", Choice::AcceptModel, k as i64)).await, StatusCode::OK);
    }
    let before = stats(&c, &base, 1).await;
    let restarted = spawn(AppState::load(dir.path(), clock).unwrap()).await;
    let after = stats(&c, &restarted, 1).await;
    assert_eq!(before, after);
    assert_eq!(after.decided, 2);
    let served = next(&c, &restarted, "ann-b").await.unwrap();
    assert!(!["t00", "t03"].contains(&served.item_id.as_str()));
}

#[tokio::test]
async fn no_open_round_is_a_conflict() {
    let dir = tempfile::tempdir().unwrap();
    store(dir.path(), 2, ReviewMode::Open);
    let mut lp = RelabelLoop::open(dir.path()).unwrap();
    lp.apply_round(&[]).unwrap();
    drop(lp);
    let (clock, _) = manual_clock();
    let base = spawn(AppState::load(dir.path(), clock).unwrap()).await;
    let c = reqwest::Client::new();
    assert_eq!(next_status(&c, &base).await, StatusCode::CONFLICT);
    // applied rounds stay readable
    let s = stats(&c, &base, 1).await;
    assert!(s.closed);
    assert_eq!(s.queued, 2);
    let export = c.get(format!("{base}/rounds/1/export")).send().await.unwrap();
    assert_eq!(export.status(), StatusCode::OK);
    assert_eq!(export.text().await.unwrap(), "");
}
