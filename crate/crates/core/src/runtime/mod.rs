//! End-to-end orchestration: streaming processing, persistence, replay
//! analysis, questionnaire feedback and timing.

mod analysis;
mod bench;
mod producer;
mod records;
mod run;
mod sink;

pub use analysis::{rebuild_engine, run_analysis, stored_windows, submit_phq, AnalysisReport, PhqReceipt};
pub use bench::{benchmark, BenchReport, WindowTiming, MIN_BENCH_SECS, STEADY_STATE_WINDOW};
pub use producer::{ProducerTimes, RawSummary, StreamFramer, WindowProducer, WindowProduct, RAW_SUMMARY_SECS};
pub use records::{indicator_metric, parse_indicator_metric, windows_from_records, PHQ_METRIC, SUPPORT_METRIC, VOICED_FRACTION};
pub use run::{load_input, run_batch, run_stream, InputSource, RunSummary};
pub use sink::{LinkageSink, Stage, StageTiming, WindowReport};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::AggregateError;
use crate::features::FeatureConfig;
use crate::ingest::{IngestError, VadConfig};
use crate::linkage::{load_mapping_config, LinkageError, MappingSpec};
use crate::par::Parallelism;
use crate::store::{StoreError, Timeline};

pub const DEFAULT_SUBJECT: &str = "default";
/// Name of the configuration snapshot kept next to the collections.
pub const CONFIG_SNAPSHOT: &str = "config.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Linkage(#[from] LinkageError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no contextual metrics stored for subject '{0}'")]
    NoData(String),
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pipeline settings carried in the `pipeline` section of config.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub subject_id: String,
    /// Wall-clock time of stream second 0, RFC 3339.
    pub origin: String,
    pub vad: VadConfig,
    pub features: FeatureConfig,
    pub parallelism: Parallelism,
    /// Input chunk length for file sources, seconds.
    pub chunk_secs: f64,
    /// Capacity of each inter-stage queue.
    pub queue_depth: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            subject_id: DEFAULT_SUBJECT.into(),
            origin: "1970-01-01T00:00:00Z".into(),
            vad: VadConfig::default(),
            features: FeatureConfig::default(),
            parallelism: Parallelism::default(),
            chunk_secs: 1.0,
            queue_depth: 4,
        }
    }
}

/// Mapping plus pipeline settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeConfig {
    pub mapping: MappingSpec,
    pub pipeline: PipelineSettings,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            mapping: MappingSpec::bundled(),
            pipeline: PipelineSettings::default(),
        }
    }
}

impl RuntimeConfig {
    pub fn from_json(document: &str) -> Result<Self, PipelineError> {
        let mapping = load_mapping_config(document)?;
        let value: serde_json::Value =
            serde_json::from_str(document).map_err(|e| PipelineError::Config(e.to_string()))?;
        let pipeline = match value.get("pipeline") {
            Some(p) => serde_json::from_value(p.clone()).map_err(|e| PipelineError::Config(format!("pipeline: {e}")))?,
            None => PipelineSettings::default(),
        };
        let cfg = Self { mapping, pipeline };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The snapshot stored in a data directory, or the default when absent.
    pub fn from_data_dir(dir: &Path) -> Result<Self, PipelineError> {
        let path = dir.join(CONFIG_SNAPSHOT);
        if path.exists() {
            Self::from_path(&path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let p = &self.pipeline;
        if p.subject_id.trim().is_empty() {
            return Err(PipelineError::Config("empty subject_id".into()));
        }
        if !(p.chunk_secs > 0.0 && p.chunk_secs <= 60.0) {
            return Err(PipelineError::Config("chunk_secs must be within (0, 60]".into()));
        }
        if p.queue_depth == 0 {
            return Err(PipelineError::Config("queue_depth must be positive".into()));
        }
        self.timeline()?;
        Ok(())
    }

    pub fn timeline(&self) -> Result<Timeline, PipelineError> {
        Ok(Timeline::parse(&self.pipeline.origin)?)
    }

    pub fn to_json(&self) -> String {
        let mut doc: serde_json::Value =
            serde_json::from_str(&self.mapping.to_json()).expect("mapping json is valid");
        doc["pipeline"] = serde_json::to_value(&self.pipeline).expect("settings serialize");
        serde_json::to_string_pretty(&doc).expect("config serializes")
    }
}
