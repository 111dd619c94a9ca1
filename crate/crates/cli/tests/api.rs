use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use hearlink::api::{router, AppState};
use hearlink::commands::app_state;
use hearlink_core::linkage::{LinkageEngine, PHQ_ITEMS};
use hearlink_core::runtime::{run_batch, RuntimeConfig};
use hearlink_core::store::Store;
use hearlink_core::synth::{synth_stream, SynthSpec, SyntheticProfile};
use http_body_util::BodyExt;
use parking_lot::Mutex;
use serde_json::{json, Value};
use tower::ServiceExt;

fn populate(dir: &Path) -> RuntimeConfig {
    let mut cfg = RuntimeConfig::default();
    cfg.mapping.warmup_windows = 2;
    let samples = synth_stream(&SynthSpec::new(vec![SyntheticProfile::baseline(50.0)]), 9).unwrap();
    let store = Arc::new(Store::open(dir).unwrap());
    let engine = Arc::new(Mutex::new(LinkageEngine::new(cfg.mapping.clone())));
    run_batch(&samples, &cfg, store, engine).unwrap();
    cfg
}

fn state(dir: &Path) -> AppState {
    let cfg = populate(dir);
    app_state(dir, &cfg).unwrap()
}

async fn call(state: &AppState, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn questionnaire(score: i64, items: usize) -> Value {
    let items: serde_json::Map<String, Value> = PHQ_ITEMS[..items]
        .iter()
        .map(|k| (k.to_string(), json!(score)))
        .collect();
    json!({ "timestamp": "2024-06-01T08:00:00Z", "items": items })
}

#[tokio::test]
async fn indicators_carry_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let (status, body) = call(&s, Method::GET, "/indicators", None).await;
    assert_eq!(status, StatusCode::OK);
    let indicators = body["indicators"].as_array().unwrap();
    assert_eq!(indicators.len(), 9);
    for t in indicators {
        let points = t["points"].as_array().unwrap();
        assert_eq!(points.len(), 3);
        for p in points {
            let gamma = p["coverage"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&gamma));
        }
    }
}

#[tokio::test]
async fn read_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());

    let (status, raw) = call(&s, Method::GET, "/metrics/raw?metric=f0&from=0&to=10", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(raw.as_array().unwrap().len(), 10);

    let (_, ctx) = call(&s, Method::GET, "/metrics/contextual?metric=f0_std", None).await;
    let ctx = ctx.as_array().unwrap();
    assert_eq!(ctx.len(), 3);
    assert!(ctx.iter().all(|r| r["detail"]["mean"].is_number()));

    let (_, support) = call(&s, Method::GET, "/support", None).await;
    assert_eq!(support["support"].as_array().unwrap().len(), 3);

    let (status, trace) = call(&s, Method::GET, "/trace/20", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(trace["traces"].as_array().unwrap().len(), 9);
    assert_eq!(trace["timestamp"], "1970-01-01T00:00:20.000Z");

    let (status, _) = call(&s, Method::GET, "/trace/0", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&s, Method::GET, "/trace/later", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&s, Method::GET, "/indicators?subject=nobody", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn all_zero_questionnaire_updates_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let count = |b: &Value| b["current"]["f0_std"]["sample_count"].as_u64().unwrap();

    let (_, before) = call(&s, Method::GET, "/baselines", None).await;
    let (status, receipt) = call(&s, Method::POST, "/phq9", Some(questionnaire(0, 9))).await;
    assert_eq!(status, StatusCode::CREATED, "{receipt}");
    assert_eq!(receipt["baseline_changed"], true);
    let (_, after) = call(&s, Method::GET, "/baselines", None).await;
    assert_eq!(count(&after), count(&before) + receipt["windows_absorbed"].as_u64().unwrap());
    assert!(count(&after) > count(&before));

    let (status, _) = call(&s, Method::POST, "/phq9", Some(questionnaire(0, 9))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn invalid_questionnaires_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let (status, body) = call(&s, Method::POST, "/phq9", Some(questionnaire(1, 8))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let (status, _) = call(&s, Method::POST, "/phq9", Some(questionnaire(4, 9))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&s, Method::POST, "/phq9", Some(json!({"items": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&s, Method::POST, "/phq9?subject=other", Some(questionnaire(0, 9))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(s.store.len("phq9_responses").unwrap(), 0);
}
