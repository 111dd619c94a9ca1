//! Read-mostly HTTP API over a data directory.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hearlink_core::linkage::{LinkageEngine, Phq9Response};
use hearlink_core::runtime::{parse_indicator_metric, submit_phq, PipelineError, SUPPORT_METRIC};
use hearlink_core::store::{
    MetricRecord, Store, StoreError, Timeline, ANALYZED_METRICS, BASELINES, CONTEXTUAL_METRICS, RAW_METRICS,
    TRACES,
};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Shared state: the store, and the engine of the subject being processed.
#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub engine: Arc<Mutex<LinkageEngine>>,
    pub subject: String,
    pub timeline: Timeline,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::DuplicateRecord { .. } => StatusCode::CONFLICT,
            StoreError::Validation(_) => StatusCode::BAD_REQUEST,
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Linkage(_) => StatusCode::BAD_REQUEST,
            PipelineError::Conflict(_) => StatusCode::CONFLICT,
            PipelineError::NoData(_) => StatusCode::NOT_FOUND,
            PipelineError::Store(StoreError::DuplicateRecord { .. }) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Default, Deserialize)]
pub struct Filter {
    subject: Option<String>,
    metric: Option<String>,
    /// Inclusive lower bound on window start, seconds.
    from: Option<f64>,
    /// Exclusive upper bound on window start, seconds.
    to: Option<f64>,
}

impl AppState {
    fn subject(&self, requested: Option<&str>) -> Result<String, ApiError> {
        let subject = requested.unwrap_or(&self.subject).to_string();
        if subject == self.subject || self.store.subjects().contains(&subject) {
            Ok(subject)
        } else {
            Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown subject '{subject}'")))
        }
    }

    fn records(&self, collection: &str, f: &Filter) -> Result<Vec<MetricRecord>, ApiError> {
        let subject = self.subject(f.subject.as_deref())?;
        let range = match (f.from, f.to) {
            (None, None) => None,
            (lo, hi) => Some((lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))),
        };
        Ok(self.store.query(collection, &subject, f.metric.as_deref(), range)?)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/subjects", get(subjects))
        .route("/metrics/raw", get(raw_metrics))
        .route("/metrics/aggregated", get(aggregated_metrics))
        .route("/metrics/contextual", get(contextual_metrics))
        .route("/indicators", get(indicators))
        .route("/support", get(support))
        .route("/baselines", get(baselines))
        .route("/trace/{window}", get(trace))
        .route("/phq9", post(phq9))
        .with_state(state)
}

async fn subjects(State(s): State<AppState>) -> Json<Value> {
    Json(json!({ "live": s.subject, "stored": s.store.subjects() }))
}

async fn raw_metrics(State(s): State<AppState>, Query(f): Query<Filter>) -> ApiResult<Vec<MetricRecord>> {
    Ok(Json(s.records(RAW_METRICS, &f)?))
}

async fn aggregated_metrics(State(s): State<AppState>, Query(f): Query<Filter>) -> ApiResult<Vec<MetricRecord>> {
    Ok(Json(s.records(hearlink_core::store::AGGREGATED_METRICS, &f)?))
}

async fn contextual_metrics(State(s): State<AppState>, Query(f): Query<Filter>) -> ApiResult<Vec<MetricRecord>> {
    Ok(Json(s.records(CONTEXTUAL_METRICS, &f)?))
}

#[derive(Debug, Serialize)]
struct IndicatorPoint {
    window_start: f64,
    timestamp: String,
    ema: Option<f64>,
    score: Option<f64>,
    coverage: Option<f64>,
    active: Option<bool>,
}

#[derive(Debug, Serialize)]
struct Trajectory {
    indicator: u8,
    theta: Option<f64>,
    beta: Option<f64>,
    points: Vec<IndicatorPoint>,
}

async fn indicators(State(s): State<AppState>, Query(f): Query<Filter>) -> ApiResult<Value> {
    let records = s.records(ANALYZED_METRICS, &Filter { metric: None, ..f })?;
    let mut by_indicator: BTreeMap<u8, Trajectory> = BTreeMap::new();
    for r in records {
        let Some(i) = parse_indicator_metric(&r.metric_name) else {
            continue;
        };
        let d = r.detail.clone().unwrap_or(Value::Null);
        let t = by_indicator.entry(i).or_insert_with(|| Trajectory {
            indicator: i,
            theta: d["theta"].as_f64(),
            beta: d["beta"].as_f64(),
            points: Vec::new(),
        });
        t.points.push(IndicatorPoint {
            window_start: r.window_start,
            timestamp: r.timestamp,
            ema: r.value,
            score: d["score"].as_f64(),
            coverage: d["coverage"].as_f64(),
            active: d["active"].as_bool(),
        });
    }
    Ok(Json(json!({ "indicators": by_indicator.into_values().collect::<Vec<_>>() })))
}

async fn support(State(s): State<AppState>, Query(f): Query<Filter>) -> ApiResult<Value> {
    let records = s.records(
        ANALYZED_METRICS,
        &Filter {
            metric: Some(SUPPORT_METRIC.into()),
            ..f
        },
    )?;
    let points: Vec<Value> = records
        .into_iter()
        .map(|r| {
            json!({
                "window_start": r.window_start,
                "timestamp": r.timestamp,
                "support": r.value == Some(1.0),
                "active": r.detail.as_ref().map_or(Value::Null, |d| d["active"].clone()),
            })
        })
        .collect();
    Ok(Json(json!({ "support": points })))
}

async fn baselines(State(s): State<AppState>, Query(f): Query<Filter>) -> ApiResult<Value> {
    let history = s.records(BASELINES, &f)?;
    // history is ordered by position, so the last snapshot per metric wins
    let mut current: BTreeMap<String, Value> = BTreeMap::new();
    for r in &history {
        let d = r.detail.clone().unwrap_or(Value::Null);
        current.insert(
            r.metric_name.clone(),
            json!({
                "mean": r.value,
                "std": d["std"],
                "sample_count": d["sample_count"],
                "last_update": d["last_update"],
                "provenance": r.provenance,
            }),
        );
    }
    Ok(Json(json!({ "current": current, "history": history })))
}

#[derive(Debug, Default, Deserialize)]
pub struct SubjectQuery {
    subject: Option<String>,
}

async fn trace(
    State(s): State<AppState>,
    Path(window): Path<String>,
    Query(q): Query<SubjectQuery>,
) -> ApiResult<Value> {
    let start: f64 = window
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, format!("window '{window}' is not a start time")))?;
    let f = Filter {
        subject: q.subject,
        metric: None,
        from: Some(start),
        to: None,
    };
    let exact = |records: Vec<MetricRecord>| -> Vec<MetricRecord> {
        records.into_iter().filter(|r| r.window_start == start).collect()
    };
    let traces = exact(s.records(TRACES, &f)?);
    if traces.is_empty() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no trace for window {start}")));
    }
    let contextual = exact(s.records(CONTEXTUAL_METRICS, &f)?);
    let analyzed = exact(s.records(ANALYZED_METRICS, &f)?);
    Ok(Json(json!({
        "window_start": start,
        "timestamp": traces[0].timestamp,
        "quality_ok": traces[0].quality_ok,
        "traces": traces.iter().map(|r| r.detail.clone()).collect::<Vec<_>>(),
        "contextual": contextual,
        "analyzed": analyzed,
    })))
}

async fn phq9(
    State(s): State<AppState>,
    Query(q): Query<SubjectQuery>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    if q.subject.as_deref().is_some_and(|x| x != s.subject) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "questionnaires are accepted for the live subject only",
        ));
    }
    let response: Phq9Response = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed questionnaire: {e}")))?;
    let state = s.clone();
    let receipt = tokio::task::spawn_blocking(move || {
        submit_phq(&state.store, &state.engine, &state.subject, state.timeline, &response)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(serde_json::to_value(receipt).expect("receipt serializes"))))
}

/// Serve until the process is stopped.
pub async fn serve(state: AppState, port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    log::info!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
