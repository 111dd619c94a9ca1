//! Feature → biomarker → indicator linkage, temporal smoothing and the
//! count-of-nine support rule.

mod baseline;
mod config;
mod engine;
mod phq;
mod scoring;

pub use baseline::{BaselineProfile, MetricBaseline};
pub use config::{
    default_beta, load_mapping_config, Descriptor, Direction, IndicatorParams, MappingEntry, MappingSpec,
    Relationship, SignalGroup, DEFAULT_EPSILON, DEFAULT_MAPPING_JSON, DEFAULT_TAU, DEFAULT_THETA,
    DEFAULT_WARMUP_WINDOWS, INDICATOR_COUNT,
};
pub use engine::{
    score_contextual, ContextualValue, IndicatorState, LinkageEngine, WindowOutcome, WindowStatus,
};
pub use phq::{indicator_for_item, update_baseline, Phq9Response, PHQ_ITEMS};
pub use scoring::{
    apply_direction, binarize, ema_update, indicator_score, mdd_support, standardize, Contribution,
    IndicatorTrace, Standardized, MDD_MIN_ACTIVE,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkageError {
    #[error("invalid mapping config: {0}")]
    Config(String),
    #[error("no baseline for metric '{0}'")]
    MissingBaseline(String),
    #[error("invalid PHQ-9 response: {0}")]
    Validation(String),
}
