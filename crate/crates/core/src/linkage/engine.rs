use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::baseline::BaselineProfile;
use super::config::{MappingSpec, Relationship, INDICATOR_COUNT};
use super::phq::{update_baseline, Phq9Response};
use super::scoring::{
    apply_direction, binarize, ema_update, indicator_score, mdd_support, standardize, Contribution,
    IndicatorTrace,
};
use super::LinkageError;
use crate::aggregate::HldWindow;

/// One mapped metric after baseline standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualValue {
    pub metric: String,
    pub raw: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub z: Option<f64>,
    pub z_tilde: Option<f64>,
    pub capped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorState {
    pub indicator: u8,
    pub score: Option<f64>,
    pub ema: Option<f64>,
    pub coverage: f64,
    pub active: bool,
    pub theta: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum WindowStatus {
    /// Window went into the baseline; nothing scored.
    Warmup { seen: usize, needed: usize },
    Scored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowOutcome {
    pub window_start: f64,
    pub window_len: f64,
    pub quality_ok: bool,
    pub status: WindowStatus,
    pub contextual: Vec<ContextualValue>,
    pub indicators: Vec<IndicatorState>,
    pub traces: Vec<IndicatorTrace>,
    pub support: Option<bool>,
}

/// Score one window from its clipped z-values, continuing from the previous
/// smoothed scores. Metrics missing from `z_tilde` count as unavailable.
pub fn score_contextual(
    spec: &MappingSpec,
    z_tilde: &BTreeMap<String, Option<f64>>,
    prev_ema: &[Option<f64>; INDICATOR_COUNT],
) -> (Vec<IndicatorState>, Vec<IndicatorTrace>, bool) {
    let mut states = Vec::with_capacity(INDICATOR_COUNT);
    let mut traces = Vec::with_capacity(INDICATOR_COUNT);
    for i in 1..=INDICATOR_COUNT as u8 {
        let contributions: Vec<Contribution> = spec
            .entries_for(i)
            .map(|e| {
                let z = z_tilde.get(&e.feature).copied().flatten();
                Contribution {
                    feature: e.feature.clone(),
                    biomarker: e.biomarker.clone(),
                    direction: e.direction,
                    relationship: e.relationship,
                    weight: e.weight,
                    z_tilde: z,
                    psi: z.map(|z| apply_direction(z, e.direction)),
                }
            })
            .collect();
        let (score, coverage) = indicator_score(contributions.iter().map(|c| (c.psi, c.weight)));
        let params = spec.params(i);
        let ema = ema_update(score, prev_ema[i as usize - 1], params.beta);
        states.push(IndicatorState {
            indicator: i,
            score,
            ema,
            coverage,
            active: binarize(ema, params.theta),
            theta: params.theta,
            beta: params.beta,
        });
        traces.push(IndicatorTrace {
            indicator: i,
            nonlinear: contributions
                .iter()
                .any(|c| c.relationship == Relationship::Nonlinear),
            contributions,
            score,
            coverage,
        });
    }
    let active: [bool; INDICATOR_COUNT] = std::array::from_fn(|k| states[k].active);
    (states, traces, mdd_support(&active))
}

/// Stateful per-subject linkage: warmup, standardization, scoring and
/// recalibration.
#[derive(Debug, Clone)]
pub struct LinkageEngine {
    spec: MappingSpec,
    metrics: Vec<String>,
    baseline: BaselineProfile,
    warmup_seen: usize,
    ema: [Option<f64>; INDICATOR_COUNT],
    last: Option<Vec<IndicatorState>>,
    since_response: Vec<HldWindow>,
    position: f64,
}

impl LinkageEngine {
    pub fn new(spec: MappingSpec) -> Self {
        let metrics = spec.metrics();
        Self {
            spec,
            metrics,
            baseline: BaselineProfile::default(),
            warmup_seen: 0,
            ema: [None; INDICATOR_COUNT],
            last: None,
            since_response: Vec::new(),
            position: 0.0,
        }
    }

    pub fn spec(&self) -> &MappingSpec {
        &self.spec
    }

    pub fn baseline(&self) -> &BaselineProfile {
        &self.baseline
    }

    pub fn is_warm(&self) -> bool {
        self.warmup_seen >= self.spec.warmup_windows
    }

    pub fn warmup_seen(&self) -> usize {
        self.warmup_seen
    }

    /// States after the most recent scored window.
    pub fn states(&self) -> Option<&[IndicatorState]> {
        self.last.as_deref()
    }

    /// End (s) of the latest processed window.
    pub fn position(&self) -> f64 {
        self.position
    }

    /// Windows waiting to be judged by the next questionnaire.
    pub fn pending_windows(&self) -> usize {
        self.since_response.len()
    }

    /// Standardize against the current baseline without touching state.
    pub fn contextualize(&self, window: &HldWindow) -> Vec<ContextualValue> {
        self.metrics
            .iter()
            .map(|m| {
                let raw = window.get(m).filter(|_| window.quality_ok);
                let base = self.baseline.get(m);
                let st = raw
                    .zip(base)
                    .map(|(x, b)| standardize(x, b, self.spec.tau_for(m), self.spec.epsilon));
                ContextualValue {
                    metric: m.clone(),
                    raw,
                    mean: base.map(|b| b.mean),
                    std: base.map(|b| b.std),
                    z: st.map(|s| s.z),
                    z_tilde: st.map(|s| s.z_tilde),
                    capped: st.is_some_and(|s| s.capped),
                }
            })
            .collect()
    }

    pub fn process_window(&mut self, window: &HldWindow) -> WindowOutcome {
        let needed = self.spec.warmup_windows;
        self.position = self.position.max(window.window_start + window.window_len);
        let outcome = |status, contextual, indicators, traces, support| WindowOutcome {
            window_start: window.window_start,
            window_len: window.window_len,
            quality_ok: window.quality_ok,
            status,
            contextual,
            indicators,
            traces,
            support,
        };

        if !self.is_warm() {
            if window.quality_ok {
                let at = window.window_start + window.window_len;
                for m in &self.metrics {
                    if let Some(x) = window.get(m) {
                        self.baseline.observe(m, x, at);
                    }
                }
                self.warmup_seen += 1;
            }
            let status = WindowStatus::Warmup {
                seen: self.warmup_seen,
                needed,
            };
            return outcome(status, Vec::new(), Vec::new(), Vec::new(), None);
        }

        let contextual = self.contextualize(window);
        let z: BTreeMap<String, Option<f64>> = contextual
            .iter()
            .map(|c| (c.metric.clone(), c.z_tilde))
            .collect();
        let (states, traces, support) = score_contextual(&self.spec, &z, &self.ema);
        for s in &states {
            self.ema[s.indicator as usize - 1] = s.ema;
        }
        self.last = Some(states.clone());
        if window.quality_ok {
            self.since_response.push(window.clone());
        }
        outcome(WindowStatus::Scored, contextual, states, traces, Some(support))
    }

    /// Recalibrate from a questionnaire. Returns whether the baseline moved.
    pub fn apply_phq(&mut self, response: &Phq9Response) -> Result<bool, LinkageError> {
        let updated = update_baseline(&self.baseline, response, &self.since_response, &self.spec)?;
        let changed = updated != self.baseline;
        self.baseline = updated;
        self.since_response.clear();
        Ok(changed)
    }
}
