//! Per-metric running mean and spread.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Running statistics for one metric. `std` is the sample standard
/// deviation (0 until two observations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBaseline {
    pub mean: f64,
    pub std: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
    pub sample_count: u64,
    /// Stream time (s) of the newest absorbed observation.
    pub last_update: f64,
}

impl MetricBaseline {
    fn empty() -> Self {
        Self {
            mean: 0.0,
            std: 0.0,
            m2: 0.0,
            sample_count: 0,
            last_update: 0.0,
        }
    }

    /// Welford single-observation update.
    pub fn observe(&mut self, x: f64, at: f64) {
        self.sample_count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.sample_count as f64;
        self.m2 += delta * (x - self.mean);
        self.refresh(at);
    }

    /// Absorb a batch at once (pairwise merge of two summaries).
    pub fn merge(&mut self, batch: &[f64], at: f64) {
        if batch.is_empty() {
            return;
        }
        let nb = batch.len() as f64;
        let mean_b = batch.iter().sum::<f64>() / nb;
        let m2_b = batch.iter().map(|x| (x - mean_b).powi(2)).sum::<f64>();
        if self.sample_count == 0 {
            self.mean = mean_b;
            self.m2 = m2_b;
            self.sample_count = batch.len() as u64;
        } else {
            let na = self.sample_count as f64;
            let n = na + nb;
            let delta = mean_b - self.mean;
            self.mean += delta * nb / n;
            self.m2 += m2_b + delta * delta * na * nb / n;
            self.sample_count += batch.len() as u64;
        }
        self.refresh(at);
    }

    fn refresh(&mut self, at: f64) {
        self.m2 = self.m2.max(0.0);
        self.std = if self.sample_count > 1 {
            (self.m2 / (self.sample_count - 1) as f64).sqrt()
        } else {
            0.0
        };
        self.last_update = self.last_update.max(at);
    }
}

/// Baselines for every metric seen so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineProfile {
    pub metrics: BTreeMap<String, MetricBaseline>,
}

impl BaselineProfile {
    pub fn get(&self, metric: &str) -> Option<&MetricBaseline> {
        self.metrics.get(metric).filter(|b| b.sample_count > 0)
    }

    pub fn observe(&mut self, metric: &str, x: f64, at: f64) {
        self.metrics
            .entry(metric.to_string())
            .or_insert_with(MetricBaseline::empty)
            .observe(x, at);
    }

    pub fn merge(&mut self, metric: &str, batch: &[f64], at: f64) {
        if batch.is_empty() {
            return;
        }
        self.metrics
            .entry(metric.to_string())
            .or_insert_with(MetricBaseline::empty)
            .merge(batch, at);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_stats(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean, var.sqrt())
    }

    #[test]
    fn single_observation_has_zero_spread() {
        let mut p = BaselineProfile::default();
        p.observe("f0_avg", 120.0, 10.0);
        let b = p.get("f0_avg").unwrap();
        assert_eq!((b.mean, b.std, b.sample_count, b.last_update), (120.0, 0.0, 1, 10.0));
        assert!(p.get("jitter").is_none());
    }

    #[test]
    fn incremental_mean_identity() {
        let mut b = MetricBaseline::empty();
        for x in [1.0, 2.0, 3.0, 4.0] {
            b.observe(x, 0.0);
        }
        let (mu, n) = (b.mean, b.sample_count as f64);
        let new = [10.0, 12.0];
        let xbar = 11.0;
        b.merge(&new, 1.0);
        assert!((b.mean - (mu + (xbar - mu) * 2.0 / (n + 2.0))).abs() < 1e-12);
        assert_eq!(b.sample_count, 6);
    }

    proptest! {
        #[test]
        fn streaming_and_batched_agree_with_direct(
            a in proptest::collection::vec(-100.0f64..100.0, 0..30),
            c in proptest::collection::vec(-100.0f64..100.0, 0..30),
        ) {
            prop_assume!(!a.is_empty() || !c.is_empty());
            let mut streamed = MetricBaseline::empty();
            for x in a.iter().chain(&c) {
                streamed.observe(*x, 0.0);
            }
            let mut merged = MetricBaseline::empty();
            merged.merge(&a, 0.0);
            merged.merge(&c, 0.0);
            let all: Vec<f64> = a.iter().chain(&c).copied().collect();
            let (mean, std) = sample_stats(&all);
            for b in [&streamed, &merged] {
                prop_assert!((b.mean - mean).abs() < 1e-9);
                prop_assert!((b.std - std).abs() < 1e-7);
                prop_assert!(b.std >= 0.0);
                prop_assert_eq!(b.sample_count, all.len() as u64);
            }
        }
    }
}
