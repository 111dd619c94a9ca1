use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::aggregate::WINDOW_SECS;
use crate::linkage::{LinkageEngine, WindowStatus};
use crate::store::{Store, Timeline, AGGREGATED_METRICS, ANALYZED_METRICS, BASELINES, CONTEXTUAL_METRICS, RAW_METRICS, TRACES};

use super::producer::WindowProduct;
use super::records::{RecordFactory, WRITER_AGGREGATOR, WRITER_INGEST, WRITER_LINKAGE};
use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Extract,
    Aggregate,
    Link,
    Persist,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Extract, Stage::Aggregate, Stage::Link, Stage::Persist];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub window_index: usize,
    /// Seconds.
    pub wall_time: f64,
    /// Seconds of audio covered.
    pub audio_time: f64,
    pub rtf: f64,
}

impl StageTiming {
    fn new(stage: Stage, window_index: usize, wall: Duration) -> Self {
        // clock resolution can report zero for trivial stages
        let wall_time = wall.as_secs_f64().max(1e-9);
        Self {
            stage,
            window_index,
            wall_time,
            audio_time: WINDOW_SECS,
            rtf: wall_time / WINDOW_SECS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_index: usize,
    pub window_start: f64,
    pub quality_ok: bool,
    pub status: WindowStatus,
    pub support: Option<bool>,
    pub stages: Vec<StageTiming>,
    /// End-to-end seconds for the window as measured by the runner; equals
    /// the stage sum when stages overlap in a pipelined run.
    pub wall_time: f64,
}

impl WindowReport {
    pub fn stage_sum(&self) -> f64 {
        self.stages.iter().map(|s| s.wall_time).sum()
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageTiming> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn rtf(&self) -> f64 {
        self.wall_time / WINDOW_SECS
    }
}

/// Linkage and persistence for one subject's stream.
pub struct LinkageSink {
    store: Arc<Store>,
    engine: Arc<Mutex<LinkageEngine>>,
    subject: String,
    timeline: Timeline,
}

impl LinkageSink {
    pub fn new(
        store: Arc<Store>,
        engine: Arc<Mutex<LinkageEngine>>,
        subject: &str,
        timeline: Timeline,
    ) -> Result<Self, PipelineError> {
        store.register_writer(RAW_METRICS, WRITER_INGEST)?;
        store.register_writer(AGGREGATED_METRICS, WRITER_AGGREGATOR)?;
        for c in [CONTEXTUAL_METRICS, ANALYZED_METRICS, TRACES, BASELINES] {
            store.register_writer(c, WRITER_LINKAGE)?;
        }
        Ok(Self {
            store,
            engine,
            subject: subject.to_string(),
            timeline,
        })
    }

    pub fn consume(&self, product: WindowProduct) -> Result<WindowReport, PipelineError> {
        let factory = RecordFactory {
            subject: &self.subject,
            timeline: self.timeline,
        };
        let w = &product.window;

        // the engine lock also serializes questionnaire submissions
        let mut engine = self.engine.lock();
        let t = Instant::now();
        let was_warm = engine.is_warm();
        let outcome = engine.process_window(w);
        let link = t.elapsed();

        let t = Instant::now();
        let mut linkage = Vec::new();
        if outcome.status == WindowStatus::Scored {
            linkage.extend(factory.contextual(w.window_start, w.quality_ok, &outcome.contextual));
            linkage.extend(factory.analyzed(
                w.window_start,
                w.quality_ok,
                &outcome.indicators,
                outcome.support.unwrap_or(false),
            ));
            linkage.extend(factory.traces(w.window_start, w.quality_ok, &outcome.traces));
        }
        if !was_warm && engine.is_warm() {
            linkage.extend(factory.baselines(engine.position(), engine.baseline(), "warmup"));
        }
        self.store.append_all(WRITER_INGEST, factory.raw(&product.raw))?;
        self.store.append_all(WRITER_AGGREGATOR, factory.aggregated(w))?;
        self.store.append_all(WRITER_LINKAGE, linkage)?;
        let persist = t.elapsed();
        drop(engine);

        let i = product.index;
        let times = product.times;
        let mut report = WindowReport {
            window_index: i,
            window_start: w.window_start,
            quality_ok: w.quality_ok,
            status: outcome.status,
            support: outcome.support,
            stages: vec![
                StageTiming::new(Stage::Ingest, i, times.ingest),
                StageTiming::new(Stage::Extract, i, times.extract),
                StageTiming::new(Stage::Aggregate, i, times.aggregate),
                StageTiming::new(Stage::Link, i, link),
                StageTiming::new(Stage::Persist, i, persist),
            ],
            wall_time: 0.0,
        };
        report.wall_time = report.stage_sum();
        Ok(report)
    }
}
