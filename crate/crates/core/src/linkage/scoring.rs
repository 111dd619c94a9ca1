//! Per-window scoring arithmetic.

use serde::{Deserialize, Serialize};

use super::baseline::MetricBaseline;
use super::config::{Direction, Relationship};

/// Minimum number of active indicators for the support signal.
pub const MDD_MIN_ACTIVE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardized {
    pub z: f64,
    pub z_tilde: f64,
    /// Whether the cap was applied.
    pub capped: bool,
}

/// Baseline z-score with an ε-guarded deviation, clipped to ±τ.
pub fn standardize(x: f64, baseline: &MetricBaseline, tau: f64, epsilon: f64) -> Standardized {
    let z = (x - baseline.mean) / baseline.std.max(epsilon);
    let capped = z.abs() > tau;
    let z_tilde = if capped { tau.copysign(z) } else { z };
    Standardized { z, z_tilde, capped }
}

pub fn apply_direction(z_tilde: f64, direction: Direction) -> f64 {
    match direction {
        Direction::Positive => z_tilde,
        Direction::Negative => -z_tilde,
        Direction::Both => z_tilde.abs(),
    }
}

/// Weighted mean of available ψ and the available weight fraction.
///
/// `items` yields `(ψ, weight)` for every mapped feature, `None` where the
/// feature was unavailable. The score is absent when nothing is available.
pub fn indicator_score<I>(items: I) -> (Option<f64>, f64)
where
    I: IntoIterator<Item = (Option<f64>, f64)>,
{
    let (mut num, mut avail, mut all) = (0.0, 0.0, 0.0);
    for (psi, w) in items {
        all += w;
        if let Some(psi) = psi {
            num += w * psi;
            avail += w;
        }
    }
    let coverage = if all > 0.0 { avail / all } else { 0.0 };
    let score = (avail > 0.0).then(|| num / avail);
    (score, coverage)
}

/// One EMA step; the first observation seeds the average and absent
/// observations hold it.
pub fn ema_update(score: Option<f64>, prev: Option<f64>, beta: f64) -> Option<f64> {
    match (score, prev) {
        (Some(s), Some(p)) => Some((1.0 - beta) * s + beta * p),
        (Some(s), None) => Some(s),
        (None, p) => p,
    }
}

pub fn binarize(ema: Option<f64>, theta: f64) -> bool {
    ema.is_some_and(|s| s >= theta)
}

/// At least five active indicators, one of them (1) or (2).
pub fn mdd_support(active: &[bool; 9]) -> bool {
    active.iter().filter(|b| **b).count() >= MDD_MIN_ACTIVE && (active[0] || active[1])
}

/// One mapped feature's part in an indicator score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub biomarker: String,
    pub direction: Direction,
    pub relationship: Relationship,
    pub weight: f64,
    pub z_tilde: Option<f64>,
    pub psi: Option<f64>,
}

/// Everything needed to recompute an indicator score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorTrace {
    pub indicator: u8,
    pub contributions: Vec<Contribution>,
    pub score: Option<f64>,
    pub coverage: f64,
    /// Some contribution came from a nonlinear entry (scored as gradual).
    pub nonlinear: bool,
}

impl IndicatorTrace {
    pub fn recompute(&self) -> (Option<f64>, f64) {
        indicator_score(self.contributions.iter().map(|c| (c.psi, c.weight)))
    }
}
