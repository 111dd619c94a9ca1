//! Questionnaire responses and baseline recalibration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::baseline::BaselineProfile;
use super::config::MappingSpec;
use super::LinkageError;
use crate::aggregate::HldWindow;

pub const PHQ_ITEMS: [&str; 9] = ["Q1", "Q2", "Q3", "Q4", "Q5", "Q6", "Q7", "Q8", "Q9"];

/// Questionnaire item → indicator.
pub fn indicator_for_item(item: &str) -> Option<u8> {
    Some(match item {
        "Q1" => 2,
        "Q2" => 1,
        "Q3" => 4,
        "Q4" => 6,
        "Q5" => 3,
        "Q6" => 7,
        "Q7" => 5,
        "Q8" => 8,
        "Q9" => 9,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phq9Response {
    /// RFC 3339.
    pub timestamp: String,
    pub items: BTreeMap<String, i64>,
}

impl Phq9Response {
    pub fn validate(&self) -> Result<(), LinkageError> {
        let invalid = |m: String| Err(LinkageError::Validation(m));
        if chrono::DateTime::parse_from_rfc3339(&self.timestamp).is_err() {
            return invalid(format!("timestamp '{}' is not RFC 3339", self.timestamp));
        }
        if self.items.len() != PHQ_ITEMS.len() {
            return invalid(format!("expected 9 items, got {}", self.items.len()));
        }
        for key in PHQ_ITEMS {
            match self.items.get(key) {
                None => return invalid(format!("missing item {key}")),
                Some(v) if !(0..=3).contains(v) => {
                    return invalid(format!("item {key} = {v} outside 0..=3"))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Indicators whose item was answered "not at all".
    pub fn absent_indicators(&self) -> BTreeSet<u8> {
        self.items
            .iter()
            .filter(|(_, v)| **v == 0)
            .filter_map(|(k, _)| indicator_for_item(k))
            .collect()
    }
}

/// Fold recent windows into the baseline of every metric linked to an
/// indicator the respondent denied. Metrics of other indicators, and the
/// mapping itself, are untouched.
pub fn update_baseline(
    baseline: &BaselineProfile,
    response: &Phq9Response,
    recent: &[HldWindow],
    spec: &MappingSpec,
) -> Result<BaselineProfile, LinkageError> {
    response.validate()?;
    let mut updated = baseline.clone();
    let usable: Vec<&HldWindow> = recent.iter().filter(|w| w.quality_ok).collect();
    let Some(latest) = usable.last() else {
        return Ok(updated);
    };
    let at = latest.window_start + latest.window_len;
    for metric in spec.metrics_for_indicators(&response.absent_indicators()) {
        let values: Vec<f64> = usable.iter().filter_map(|w| w.get(&metric)).collect();
        updated.merge(&metric, &values, at);
    }
    Ok(updated)
}
