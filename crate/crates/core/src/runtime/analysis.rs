use std::collections::BTreeMap;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aggregate::HldWindow;
use crate::linkage::{score_contextual, LinkageEngine, MappingSpec, Phq9Response, INDICATOR_COUNT};
use crate::store::{
    MetricRecord, Store, StoreError, Timeline, AGGREGATED_METRICS, ANALYZED_METRICS, BASELINES, COLLECTIONS,
    CONTEXTUAL_METRICS, PHQ9_RESPONSES, TRACES,
};

use super::records::{windows_from_records, RecordFactory, WRITER_FEEDBACK, WRITER_LINKAGE};
use super::PipelineError;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// Scored windows replayed.
    pub windows: usize,
    /// Records appended because they were missing.
    pub written: usize,
    /// Stored records the replay reproduced exactly.
    pub unchanged: usize,
    /// Stored records that disagree with the replay; left untouched.
    pub mismatched: usize,
    /// Unreadable lines skipped when the store was opened.
    pub corrupt_lines: usize,
}

/// Windows persisted for a subject, rebuilt from aggregated_metrics.
pub fn stored_windows(store: &Store, subject: &str) -> Result<Vec<HldWindow>, PipelineError> {
    Ok(windows_from_records(&store.query(AGGREGATED_METRICS, subject, None, None)?))
}

/// Recompute indicator trajectories and support from stored contextual
/// metrics. Existing identical records are kept, missing ones appended.
pub fn run_analysis(
    store: &Store,
    spec: &MappingSpec,
    subject: &str,
    timeline: Timeline,
) -> Result<AnalysisReport, PipelineError> {
    let contextual = store.query(CONTEXTUAL_METRICS, subject, None, None)?;
    if contextual.is_empty() {
        return Err(PipelineError::NoData(subject.to_string()));
    }
    store.register_writer(ANALYZED_METRICS, WRITER_LINKAGE)?;
    store.register_writer(TRACES, WRITER_LINKAGE)?;

    let mut report = AnalysisReport::default();
    for c in COLLECTIONS {
        report.corrupt_lines += store.corrupt_lines(c)?;
    }

    let mut windows: BTreeMap<u64, (f64, bool, BTreeMap<String, Option<f64>>)> = BTreeMap::new();
    for r in &contextual {
        let w = windows
            .entry(r.window_start.to_bits())
            .or_insert_with(|| (r.window_start, r.quality_ok, BTreeMap::new()));
        w.2.insert(r.metric_name.clone(), r.value);
    }
    let mut ordered: Vec<_> = windows.into_values().collect();
    ordered.sort_by(|a, b| a.0.total_cmp(&b.0));

    let index = |collection: &str| -> Result<BTreeMap<(String, u64), MetricRecord>, StoreError> {
        Ok(store
            .query(collection, subject, None, None)?
            .into_iter()
            .map(|r| ((r.metric_name.clone(), r.window_start.to_bits()), r))
            .collect())
    };
    let analyzed = index(ANALYZED_METRICS)?;
    let traces = index(TRACES)?;

    let factory = RecordFactory { subject, timeline };
    let mut ema = [None; INDICATOR_COUNT];
    let mut missing = Vec::new();
    for (start, quality_ok, z) in &ordered {
        let (states, trace, support) = score_contextual(spec, z, &ema);
        for s in &states {
            ema[s.indicator as usize - 1] = s.ema;
        }
        report.windows += 1;
        let expected = factory
            .analyzed(*start, *quality_ok, &states, support)
            .into_iter()
            .map(|r| (r, &analyzed))
            .chain(factory.traces(*start, *quality_ok, &trace).into_iter().map(|r| (r, &traces)));
        for (rec, existing) in expected {
            match existing.get(&(rec.metric_name.clone(), rec.window_start.to_bits())) {
                Some(old) if *old == rec => report.unchanged += 1,
                Some(_) => report.mismatched += 1,
                None => missing.push(rec),
            }
        }
    }
    report.written = missing.len();
    store.append_all(WRITER_LINKAGE, missing)?;
    Ok(report)
}

fn phq_from_record(r: &MetricRecord) -> Result<Phq9Response, PipelineError> {
    let detail = r
        .detail
        .clone()
        .ok_or_else(|| PipelineError::Config("stored questionnaire without detail".into()))?;
    serde_json::from_value(detail).map_err(|e| PipelineError::Config(format!("stored questionnaire: {e}")))
}

/// Reconstruct the engine state of a subject by replaying stored windows and
/// questionnaires in the order they originally arrived.
pub fn rebuild_engine(store: &Store, spec: &MappingSpec, subject: &str) -> Result<LinkageEngine, PipelineError> {
    let mut engine = LinkageEngine::new(spec.clone());
    let mut responses = store.query(PHQ9_RESPONSES, subject, None, None)?.into_iter().peekable();
    for w in stored_windows(store, subject)? {
        while let Some(r) = responses.next_if(|r| r.window_start <= w.window_start) {
            engine.apply_phq(&phq_from_record(&r)?)?;
        }
        engine.process_window(&w);
    }
    for r in responses {
        engine.apply_phq(&phq_from_record(&r)?)?;
    }
    Ok(engine)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhqReceipt {
    /// Stream position the response applies to, seconds.
    pub position: f64,
    pub windows_absorbed: usize,
    pub baseline_changed: bool,
}

/// Store a questionnaire and recalibrate the engine. Only one response is
/// accepted per stream position.
pub fn submit_phq(
    store: &Store,
    engine: &Mutex<LinkageEngine>,
    subject: &str,
    timeline: Timeline,
    response: &Phq9Response,
) -> Result<PhqReceipt, PipelineError> {
    response.validate()?;
    store.register_writer(PHQ9_RESPONSES, WRITER_FEEDBACK)?;
    store.register_writer(BASELINES, WRITER_LINKAGE)?;
    let factory = RecordFactory { subject, timeline };

    let mut engine = engine.lock();
    let position = engine.position();
    let detail = json!({ "timestamp": response.timestamp, "items": response.items });
    match store.append(WRITER_FEEDBACK, factory.phq(position, detail)) {
        Err(StoreError::DuplicateRecord { .. }) => {
            return Err(PipelineError::Conflict(format!(
                "a questionnaire was already recorded at stream position {position}s"
            )))
        }
        other => other?,
    }
    let windows_absorbed = engine.pending_windows();
    let baseline_changed = engine.apply_phq(response)?;
    if baseline_changed {
        store.append_all(WRITER_LINKAGE, factory.baselines(position, engine.baseline(), "phq9"))?;
    }
    Ok(PhqReceipt {
        position,
        windows_absorbed,
        baseline_changed,
    })
}
