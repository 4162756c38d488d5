use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use chrono::{DateTime, TimeZone, Utc};
use http_body_util::BodyExt;
use proptest::prelude::*;
use pulsestream_core::model::{init_model, ModelConfig};
use pulsestream_core::textprep::{build_vocabulary, CleanConfig};
use pulsestream_core::{Sentiment, SentimentModel};
use pulsestream_pipeline::clock::ManualClock;
use pulsestream_pipeline::ingest::{FigureConfig, VideoMetadata};
use pulsestream_pipeline::store::{ScanFilter, SentimentUpdate, Store, StoreOptions};
use pulsestream_serve::{aggregate, router, score_pending, AppState, Model, ScoreOptions};
use serde_json::Value;
use tower::ServiceExt;

fn t(day: u32, hour: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, day, hour, 0, 0).unwrap()
}

fn figures() -> Vec<FigureConfig> {
    ["anies", "ganjar", "prabowo", "puan"]
        .iter()
        .map(|id| FigureConfig { figure_id: id.to_string(), display_name: id.to_uppercase(), keywords: vec![id.to_string()] })
        .collect()
}

fn video(id: &str, figure: &str, at: DateTime<Utc>, description: &str) -> VideoMetadata {
    VideoMetadata {
        video_id: id.into(),
        channel_id: "c".into(),
        title: id.into(),
        description: description.into(),
        uri: format!("https://www.youtube.com/watch?v={id}"),
        figure_id: figure.into(),
        keyword: figure.into(),
        fetched_at: at,
    }
}

fn open(dir: &std::path::Path) -> Arc<Store> {
    Arc::new(Store::open_with(dir, StoreOptions { sync: false, ..StoreOptions::default() }).unwrap())
}

fn label(store: &Store, id: &str, label: Sentiment) {
    store
        .write_sentiments(&[SentimentUpdate {
            video_id: id.into(),
            label,
            confidence: 0.9,
            scored_at: t(9, 0),
            model_version: "fixture".into(),
        }])
        .unwrap();
}

/// puan: 3 positive, 2 negative, 1 pending. anies: 1 positive on another day.
fn fixture_store(dir: &std::path::Path) -> Arc<Store> {
    let store = open(dir);
    let mut recs: Vec<_> = (0..6).map(|i| video(&format!("p{i}"), "puan", t(1 + i % 2, 8), "")).collect();
    recs.push(video("a0", "anies", t(5, 8), ""));
    store.append_batch(&recs).unwrap();
    for (id, l) in [("p0", Sentiment::Positive), ("p1", Sentiment::Positive), ("p2", Sentiment::Positive)] {
        label(&store, id, l);
    }
    label(&store, "p3", Sentiment::Negative);
    label(&store, "p4", Sentiment::Negative);
    label(&store, "a0", Sentiment::Positive);
    store
}

fn tiny_model(seed: u64) -> Model {
    let vocab = build_vocabulary(["dukung hebat", "tolak buruk", "korupsi gagal"], 50).unwrap();
    let cfg = ModelConfig { embed_dim: 4, lstm_hidden: 4, dense_hidden: 4, ..ModelConfig::new(vocab.len(), 16) }.with_seed(seed);
    SentimentModel::new(init_model(&cfg).unwrap(), vocab, CleanConfig::indonesian()).unwrap()
}

fn state(store: Arc<Store>, model: Option<Model>) -> AppState {
    AppState::with_clock(figures(), store, model, Arc::new(ManualClock::new(t(10, 12))))
}

async fn get(state: &AppState, uri: &str) -> (StatusCode, Option<String>, Value) {
    let resp = router(state.clone(), None)
        .oneshot(Request::get(uri).header(header::ORIGIN, "http://elsewhere.example").body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "application/json");
    let cors = resp.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).map(|v| v.to_str().unwrap().to_string());
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    (status, cors, serde_json::from_slice(&body).unwrap())
}

#[tokio::test]
async fn figures_in_config_order() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(open(dir.path()), None);
    let (status, cors, body) = get(&s, "/api/figures").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cors.as_deref(), Some("*"));
    let ids: Vec<&str> = body.as_array().unwrap().iter().map(|f| f["figure_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["anies", "ganjar", "prabowo", "puan"]);
    assert_eq!(body[3]["display_name"], "PUAN");

    let empty = AppState::new(vec![], open(tempfile::tempdir().unwrap().path()), None);
    assert_eq!(get(&empty, "/api/figures").await.2, serde_json::json!([]));
}

#[tokio::test]
async fn sentiment_counts_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(fixture_store(dir.path()), None);
    let (status, _, body) = get(&s, "/api/sentiment?figure=puan").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((&body["positive"], &body["negative"], &body["pending"]), (&3.into(), &2.into(), &1.into()));
    assert_eq!(body["figure_id"], "puan");
    assert_eq!(body["from"], "1970-01-01T00:00:00Z");
    assert_eq!(body["to"], "2024-03-10T12:00:00Z");
    assert_eq!(body["as_of"], "2024-03-10T12:00:00Z");

    let (_, _, day1) = get(&s, "/api/sentiment?figure=puan&from=2024-03-01&to=2024-03-01").await;
    assert_eq!((&day1["positive"], &day1["negative"], &day1["pending"]), (&2.into(), &1.into(), &0.into()));
    let (_, _, none) = get(&s, "/api/sentiment?figure=puan&from=2024-03-03T00:00:00Z").await;
    assert_eq!((&none["positive"], &none["negative"]), (&0.into(), &0.into()));

    let (status, _, body) = get(&s, "/api/sentiment?figure=nobody").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("nobody"));
    assert_eq!(get(&s, "/api/sentiment?figure=puan&from=yesterday").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&s, "/api/sentiment?figure=puan&from=2024-03-05&to=2024-03-01").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&s, "/api/sentiment").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn health_reports_records_and_model() {
    let dir = tempfile::tempdir().unwrap();
    let store = open(dir.path());
    let s = state(store.clone(), None);
    let (_, _, body) = get(&s, "/api/health").await;
    assert_eq!(body, serde_json::json!({"status": "degraded", "records": 0, "model_version": null}));
    let recs: Vec<_> = (0..5).map(|i| video(&format!("v{i}"), "anies", t(1, 1), "")).collect();
    store.append_batch(&recs).unwrap();
    let model = tiny_model(1);
    let version = model.version().to_string();
    s.set_model(Some(model));
    let (_, _, body) = get(&s, "/api/health").await;
    assert_eq!(body, serde_json::json!({"status": "ok", "records": 5, "model_version": version}));
}

#[tokio::test]
async fn static_files_at_root() {
    let dir = tempfile::tempdir().unwrap();
    let web = tempfile::tempdir().unwrap();
    std::fs::write(web.path().join("index.html"), "<h1>dashboard</h1>").unwrap();
    let app = router(state(open(dir.path()), None), Some(web.path().to_path_buf()));
    let resp = app.oneshot(Request::get("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"<h1>dashboard</h1>");
}

#[test]
fn scoring_is_idempotent_per_version() {
    let dir = tempfile::tempdir().unwrap();
    let store = open(dir.path());
    let mut recs: Vec<_> = (0..9).map(|i| video(&format!("v{i}"), "anies", t(1, i), "dukung hebat sekali")).collect();
    recs.push(video("empty", "puan", t(1, 12), ""));
    store.append_batch(&recs).unwrap();
    let clock = ManualClock::new(t(2, 0));
    let model = tiny_model(3);
    let opts = ScoreOptions { batch_size: 4, ..ScoreOptions::default() };
    let first = score_pending(&store, &model, opts, &clock).unwrap();
    assert_eq!((first.scored, first.batches), (10, 3));
    assert_eq!(score_pending(&store, &model, opts, &clock).unwrap().scored, 0);
    let scored = store.scan_all(ScanFilter::scored(true)).unwrap();
    assert_eq!(scored.len(), 10);
    assert!(scored.iter().all(|r| r.sentiment.as_ref().unwrap().model_version == model.version()));
    let empty = scored.iter().find(|r| r.video.video_id == "empty").unwrap().sentiment.clone().unwrap();
    assert_eq!(empty.label, model.predict("").label);

    let newer = tiny_model(4);
    assert_eq!(score_pending(&store, &newer, opts, &clock).unwrap().scored, 0);
    let stale = ScoreOptions { rescore_stale: true, ..opts };
    assert_eq!(score_pending(&store, &newer, stale, &clock).unwrap().model_version_changes, 10);
    assert_eq!(score_pending(&store, &newer, stale, &clock).unwrap().scored, 0);
}

#[test]
fn aggregate_window_and_unknown_figure() {
    let dir = tempfile::tempdir().unwrap();
    let store = fixture_store(dir.path());
    let figs = figures();
    let all = aggregate(&store, &figs, "puan", DateTime::UNIX_EPOCH, t(10, 0), t(10, 0)).unwrap();
    assert_eq!((all.positive, all.negative, all.pending), (3, 2, 1));
    let none = aggregate(&store, &figs, "puan", t(3, 0), t(4, 0), t(10, 0)).unwrap();
    assert_eq!((none.positive, none.negative, none.pending), (0, 0, 0));
    // Hour-level bounds inside one day partition.
    let part = aggregate(&store, &figs, "puan", t(1, 9), t(2, 23), t(10, 0)).unwrap();
    assert_eq!(part.positive + part.negative + part.pending, 3);
    assert!(matches!(
        aggregate(&store, &figs, "x", t(1, 0), t(2, 0), t(2, 0)),
        Err(pulsestream_serve::AggregateError::NotFound(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Aggregates equal a brute-force recount over the raw records, and the
    /// three counts partition the figure's records in the window.
    #[test]
    fn aggregate_matches_recount(
        recs in prop::collection::vec((0usize..4, 0u32..96, 0u8..3), 0..80),
        from_h in 0u32..96,
        len_h in 0u32..96,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let store = open(dir.path());
        let figs = figures();
        let at = |h: u32| t(1 + h / 24, h % 24);
        let videos: Vec<_> = recs.iter().enumerate()
            .map(|(i, &(f, h, _))| video(&format!("v{i}"), &figs[f].figure_id, at(h), ""))
            .collect();
        store.append_batch(&videos).unwrap();
        for (i, &(_, _, l)) in recs.iter().enumerate() {
            if l > 0 {
                label(&store, &format!("v{i}"), if l == 1 { Sentiment::Positive } else { Sentiment::Negative });
            }
        }
        let (from, to) = (at(from_h), at(from_h) + chrono::Duration::hours(len_h as i64));
        for fig in &figs {
            let agg = aggregate(&store, &figs, &fig.figure_id, from, to, to).unwrap();
            let mut expect = [0u64; 3];
            for &(f, h, l) in &recs {
                if figs[f].figure_id == fig.figure_id && at(h) >= from && at(h) <= to {
                    expect[l as usize] += 1;
                }
            }
            prop_assert_eq!([agg.pending, agg.positive, agg.negative], expect);
        }
    }
}
