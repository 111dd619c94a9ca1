//! Mapping configuration: which metric feeds which indicator, and how.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::LinkageError;

/// Bundled default mapping (the full acoustic feature table).
pub const DEFAULT_MAPPING_JSON: &str = include_str!("../../config/default_mapping.json");

pub const INDICATOR_COUNT: usize = 9;
pub const DEFAULT_TAU: f64 = 3.0;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_WARMUP_WINDOWS: usize = 30;
pub const DEFAULT_THETA: f64 = 1.0;

/// Smoothing defaults: slow for gradual indicators, fast for those that can
/// change abruptly.
pub fn default_beta(indicator: u8) -> f64 {
    match indicator {
        1 | 2 | 6 => 0.9,
        5 | 8 => 0.5,
        _ => 0.7,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Positive,
    Negative,
    Both,
}

impl Direction {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "+" => Some(Self::Positive),
            "negative" | "-" | "--" => Some(Self::Negative),
            "both" | "+/-" | "±" => Some(Self::Both),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Positive => "positive",
            Self::Negative => "negative",
            Self::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relationship {
    Gradual,
    /// Accepted and flagged; scored like `Gradual`.
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Descriptor {
    #[serde(rename = "LLD")]
    Lld,
    #[serde(rename = "HLD")]
    Hld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalGroup {
    Prosodic,
    Formant,
    Source,
    Spectral,
}

/// One feature → biomarker → indicator link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub biomarker: String,
    pub indicator: u8,
    pub relationship: Relationship,
    pub direction: Direction,
    pub weight: f64,
    pub descriptor: Descriptor,
    pub signal_group: SignalGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorParams {
    pub beta: f64,
    pub theta: f64,
}

/// Validated mapping plus scoring parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingSpec {
    pub entries: Vec<MappingEntry>,
    /// Keyed 1..=9; every indicator has parameters.
    pub indicators: BTreeMap<u8, IndicatorParams>,
    pub default_tau: f64,
    pub tau: BTreeMap<String, f64>,
    pub epsilon: f64,
    pub warmup_windows: usize,
}

// Wire shape of config.json. Enumerations stay strings here so unknown
// keywords surface as ConfigError rather than a generic parse failure.
#[derive(Debug, Serialize, Deserialize)]
struct RawEntry {
    feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    biomarker: String,
    indicator: i64,
    #[serde(default = "gradual")]
    relationship: String,
    direction: String,
    #[serde(default = "unit_weight")]
    weight: f64,
    #[serde(default = "hld")]
    descriptor: String,
    #[serde(default = "prosodic")]
    signal_group: String,
}

fn gradual() -> String {
    "gradual".into()
}
fn unit_weight() -> f64 {
    1.0
}
fn hld() -> String {
    "HLD".into()
}
fn prosodic() -> String {
    "prosodic".into()
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDocument {
    #[serde(default)]
    entries: Vec<RawEntry>,
    #[serde(default)]
    indicators: BTreeMap<String, RawIndicator>,
    #[serde(default)]
    clip: BTreeMap<String, f64>,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default = "default_warmup")]
    warmup_windows: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawIndicator {
    beta: Option<f64>,
    theta: Option<f64>,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_warmup() -> usize {
    DEFAULT_WARMUP_WINDOWS
}

fn config_err(msg: impl Into<String>) -> LinkageError {
    LinkageError::Config(msg.into())
}

fn parse_keyword<T>(what: &str, value: &str, f: impl Fn(&str) -> Option<T>) -> Result<T, LinkageError> {
    f(value).ok_or_else(|| config_err(format!("unknown {what} '{value}'")))
}

/// Parse and validate a mapping document.
pub fn load_mapping_config(document: &str) -> Result<MappingSpec, LinkageError> {
    let raw: RawDocument =
        serde_json::from_str(document).map_err(|e| config_err(format!("malformed document: {e}")))?;

    let mut entries = Vec::with_capacity(raw.entries.len());
    let mut seen = BTreeSet::new();
    for (i, e) in raw.entries.into_iter().enumerate() {
        if !(1..=INDICATOR_COUNT as i64).contains(&e.indicator) {
            return Err(config_err(format!(
                "entry {i}: indicator {} outside 1..=9",
                e.indicator
            )));
        }
        if !(e.weight >= 0.0 && e.weight.is_finite()) {
            return Err(config_err(format!("entry {i}: weight must be finite and non-negative")));
        }
        if e.feature.trim().is_empty() {
            return Err(config_err(format!("entry {i}: empty feature name")));
        }
        let direction = parse_keyword("direction", &e.direction, Direction::parse)?;
        let relationship = parse_keyword("relationship", &e.relationship, |s| {
            match s.to_ascii_lowercase().as_str() {
                "gradual" => Some(Relationship::Gradual),
                "nonlinear" | "non-linear" => Some(Relationship::Nonlinear),
                _ => None,
            }
        })?;
        let descriptor = parse_keyword("descriptor", &e.descriptor, |s| {
            match s.to_ascii_uppercase().as_str() {
                "LLD" => Some(Descriptor::Lld),
                "HLD" => Some(Descriptor::Hld),
                _ => None,
            }
        })?;
        let signal_group = parse_keyword("signal group", &e.signal_group, |s| {
            match s.to_ascii_lowercase().as_str() {
                "prosodic" => Some(SignalGroup::Prosodic),
                "formant" => Some(SignalGroup::Formant),
                "source" => Some(SignalGroup::Source),
                "spectral" => Some(SignalGroup::Spectral),
                _ => None,
            }
        })?;
        let indicator = e.indicator as u8;
        if !seen.insert((e.feature.clone(), e.biomarker.clone(), indicator)) {
            return Err(config_err(format!(
                "duplicate entry ({}, {}, {indicator})",
                e.feature, e.biomarker
            )));
        }
        entries.push(MappingEntry {
            feature: e.feature,
            label: e.label,
            biomarker: e.biomarker,
            indicator,
            relationship,
            direction,
            weight: e.weight,
            descriptor,
            signal_group,
        });
    }

    let mut indicators = BTreeMap::new();
    for (key, params) in &raw.indicators {
        let id: u8 = key
            .parse()
            .ok()
            .filter(|i| (1..=INDICATOR_COUNT as u8).contains(i))
            .ok_or_else(|| config_err(format!("indicator key '{key}' outside 1..=9")))?;
        indicators.insert(
            id,
            IndicatorParams {
                beta: params.beta.unwrap_or_else(|| default_beta(id)),
                theta: params.theta.unwrap_or(DEFAULT_THETA),
            },
        );
    }
    for id in 1..=INDICATOR_COUNT as u8 {
        indicators.entry(id).or_insert(IndicatorParams {
            beta: default_beta(id),
            theta: DEFAULT_THETA,
        });
    }
    for (id, p) in &indicators {
        if !(0.0..1.0).contains(&p.beta) {
            return Err(config_err(format!("indicator {id}: beta {} outside [0, 1)", p.beta)));
        }
        if !p.theta.is_finite() {
            return Err(config_err(format!("indicator {id}: theta must be finite")));
        }
    }

    let mut tau = raw.clip;
    let default_tau = tau.remove("default").unwrap_or(DEFAULT_TAU);
    for (metric, t) in tau.iter().chain([(&"default".to_string(), &default_tau)]) {
        if !(*t > 0.0) {
            return Err(config_err(format!("clip for '{metric}' must be positive")));
        }
    }
    if !(raw.epsilon > 0.0) {
        return Err(config_err("epsilon must be positive"));
    }

    Ok(MappingSpec {
        entries,
        indicators,
        default_tau,
        tau,
        epsilon: raw.epsilon,
        warmup_windows: raw.warmup_windows,
    })
}

impl MappingSpec {
    /// The bundled default mapping.
    pub fn bundled() -> Self {
        load_mapping_config(DEFAULT_MAPPING_JSON).expect("bundled mapping is valid")
    }

    pub fn tau_for(&self, metric: &str) -> f64 {
        self.tau.get(metric).copied().unwrap_or(self.default_tau)
    }

    pub fn params(&self, indicator: u8) -> IndicatorParams {
        self.indicators[&indicator]
    }

    pub fn entries_for(&self, indicator: u8) -> impl Iterator<Item = &MappingEntry> {
        self.entries.iter().filter(move |e| e.indicator == indicator)
    }

    /// Distinct metric names referenced by the mapping, sorted.
    pub fn metrics(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.feature.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Metrics feeding any of the given indicators.
    pub fn metrics_for_indicators(&self, indicators: &BTreeSet<u8>) -> BTreeSet<String> {
        self.entries
            .iter()
            .filter(|e| indicators.contains(&e.indicator))
            .map(|e| e.feature.clone())
            .collect()
    }

    /// Serialize back to the config.json document shape.
    pub fn to_json(&self) -> String {
        let doc = RawDocument {
            entries: self
                .entries
                .iter()
                .map(|e| RawEntry {
                    feature: e.feature.clone(),
                    label: e.label.clone(),
                    biomarker: e.biomarker.clone(),
                    indicator: e.indicator as i64,
                    relationship: serde_json::to_value(e.relationship)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    direction: e.direction.to_string(),
                    weight: e.weight,
                    descriptor: match e.descriptor {
                        Descriptor::Lld => "LLD".into(),
                        Descriptor::Hld => "HLD".into(),
                    },
                    signal_group: serde_json::to_value(e.signal_group)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                })
                .collect(),
            indicators: self
                .indicators
                .iter()
                .map(|(k, p)| {
                    (
                        k.to_string(),
                        RawIndicator {
                            beta: Some(p.beta),
                            theta: Some(p.theta),
                        },
                    )
                })
                .collect(),
            clip: self
                .tau
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .chain([("default".to_string(), self.default_tau)])
                .collect(),
            epsilon: self.epsilon,
            warmup_windows: self.warmup_windows,
        };
        serde_json::to_string_pretty(&doc).expect("mapping serializes")
    }
}
