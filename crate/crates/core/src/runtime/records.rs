//! Mapping between pipeline values and stored records.

use std::collections::BTreeMap;

use serde_json::json;

use crate::aggregate::{metric, HldWindow, WINDOW_SECS};
use crate::linkage::{BaselineProfile, ContextualValue, IndicatorState, IndicatorTrace};
use crate::store::{
    MetricRecord, Timeline, AGGREGATED_METRICS, ANALYZED_METRICS, BASELINES, CONTEXTUAL_METRICS, RAW_METRICS,
    TRACES,
};

use super::producer::RawSummary;

pub const SUPPORT_METRIC: &str = "mdd_support";
pub const VOICED_FRACTION: &str = "voiced_fraction";
pub const PHQ_METRIC: &str = "phq9";

pub(crate) const WRITER_INGEST: &str = "ingest";
pub(crate) const WRITER_AGGREGATOR: &str = "aggregator";
pub(crate) const WRITER_LINKAGE: &str = "linkage";
pub(crate) const WRITER_FEEDBACK: &str = "feedback";

pub fn indicator_metric(indicator: u8) -> String {
    format!("indicator_{indicator}")
}

/// Inverse of [`indicator_metric`].
pub fn parse_indicator_metric(name: &str) -> Option<u8> {
    name.strip_prefix("indicator_")?.parse().ok()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct RecordFactory<'a> {
    pub subject: &'a str,
    pub timeline: Timeline,
}

impl RecordFactory<'_> {
    #[allow(clippy::too_many_arguments)]
    fn record(
        &self,
        collection: &str,
        metric_name: &str,
        value: Option<f64>,
        window_start: f64,
        quality_ok: bool,
        provenance: &str,
        detail: Option<serde_json::Value>,
    ) -> MetricRecord {
        MetricRecord {
            collection: collection.to_string(),
            subject_id: self.subject.to_string(),
            metric_name: metric_name.to_string(),
            value,
            window_start,
            timestamp: self.timeline.iso(window_start),
            quality_ok,
            provenance: provenance.to_string(),
            detail,
        }
    }

    pub fn raw(&self, summaries: &[RawSummary]) -> Vec<MetricRecord> {
        summaries
            .iter()
            .flat_map(|s| {
                s.metrics
                    .iter()
                    .map(move |(name, v)| self.record(RAW_METRICS, name, *v, s.start, true, WRITER_INGEST, None))
            })
            .collect()
    }

    pub fn aggregated(&self, w: &HldWindow) -> Vec<MetricRecord> {
        let mut out: Vec<MetricRecord> = metric::ALL
            .iter()
            .map(|m| {
                self.record(AGGREGATED_METRICS, m, w.get(m), w.window_start, w.quality_ok, WRITER_AGGREGATOR, None)
            })
            .collect();
        out.push(self.record(
            AGGREGATED_METRICS,
            VOICED_FRACTION,
            Some(w.voiced_fraction),
            w.window_start,
            w.quality_ok,
            WRITER_AGGREGATOR,
            None,
        ));
        out
    }

    pub fn contextual(&self, window_start: f64, quality_ok: bool, values: &[ContextualValue]) -> Vec<MetricRecord> {
        values
            .iter()
            .map(|c| {
                let detail = json!({
                    "raw": c.raw,
                    "mean": c.mean,
                    "std": c.std,
                    "z": c.z,
                    "capped": c.capped,
                });
                self.record(CONTEXTUAL_METRICS, &c.metric, c.z_tilde, window_start, quality_ok, WRITER_LINKAGE, Some(detail))
            })
            .collect()
    }

    pub fn analyzed(&self, window_start: f64, quality_ok: bool, states: &[IndicatorState], support: bool) -> Vec<MetricRecord> {
        let mut out: Vec<MetricRecord> = states
            .iter()
            .map(|s| {
                let detail = json!({
                    "score": s.score,
                    "coverage": s.coverage,
                    "active": s.active,
                    "theta": s.theta,
                    "beta": s.beta,
                });
                self.record(
                    ANALYZED_METRICS,
                    &indicator_metric(s.indicator),
                    s.ema,
                    window_start,
                    quality_ok,
                    WRITER_LINKAGE,
                    Some(detail),
                )
            })
            .collect();
        let active: Vec<u8> = states.iter().filter(|s| s.active).map(|s| s.indicator).collect();
        out.push(self.record(
            ANALYZED_METRICS,
            SUPPORT_METRIC,
            Some(if support { 1.0 } else { 0.0 }),
            window_start,
            quality_ok,
            WRITER_LINKAGE,
            Some(json!({ "active": active })),
        ));
        out
    }

    pub fn traces(&self, window_start: f64, quality_ok: bool, traces: &[IndicatorTrace]) -> Vec<MetricRecord> {
        traces
            .iter()
            .map(|t| {
                self.record(
                    TRACES,
                    &indicator_metric(t.indicator),
                    t.score,
                    window_start,
                    quality_ok,
                    WRITER_LINKAGE,
                    Some(serde_json::to_value(t).expect("trace serializes")),
                )
            })
            .collect()
    }

    pub fn baselines(&self, at: f64, profile: &BaselineProfile, provenance: &str) -> Vec<MetricRecord> {
        profile
            .metrics
            .iter()
            .filter(|(_, b)| b.sample_count > 0)
            .map(|(name, b)| {
                let detail = json!({
                    "std": b.std,
                    "m2": b.m2,
                    "sample_count": b.sample_count,
                    "last_update": b.last_update,
                });
                self.record(BASELINES, name, Some(b.mean), at, true, provenance, Some(detail))
            })
            .collect()
    }

    pub fn phq(&self, at: f64, detail: serde_json::Value) -> MetricRecord {
        self.record(crate::store::PHQ9_RESPONSES, PHQ_METRIC, None, at, true, WRITER_FEEDBACK, Some(detail))
    }
}

/// Reassemble the windows stored in aggregated_metrics, in time order.
pub fn windows_from_records(records: &[MetricRecord]) -> Vec<HldWindow> {
    let mut by_start: BTreeMap<u64, HldWindow> = BTreeMap::new();
    let mut order: Vec<u64> = Vec::new();
    for r in records {
        let key = r.window_start.to_bits();
        let w = by_start.entry(key).or_insert_with(|| {
            order.push(key);
            HldWindow {
                window_start: r.window_start,
                window_len: WINDOW_SECS,
                metrics: BTreeMap::new(),
                voiced_fraction: 0.0,
                quality_ok: r.quality_ok,
            }
        });
        match (r.metric_name.as_str(), r.value) {
            (VOICED_FRACTION, Some(v)) => w.voiced_fraction = v,
            (_, Some(v)) => {
                w.metrics.insert(r.metric_name.clone(), v);
            }
            _ => {}
        }
    }
    let mut out: Vec<HldWindow> = order.into_iter().map(|k| by_start.remove(&k).expect("indexed")).collect();
    out.sort_by(|a, b| a.window_start.total_cmp(&b.window_start));
    out
}
