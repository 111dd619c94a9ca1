//! Autocorrelation pitch estimation and harmonicity.

use serde::{Deserialize, Serialize};

/// Pitch search band and voicing decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitchConfig {
    pub min_hz: f64,
    pub max_hz: f64,
    /// Minimum r(lag)/r(0) for a frame to count as pitched.
    pub voicing_threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            min_hz: 60.0,
            max_hz: 500.0,
            voicing_threshold: 0.3,
        }
    }
}

/// Result of a successful pitch search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchEstimate {
    pub f0: f64,
    /// Fractional lag in samples.
    pub lag: f64,
    /// Interpolated r(lag)/r(0).
    pub strength: f64,
}

/// Estimate F0 with the default search band.
pub fn estimate_f0(samples: &[f64], sample_rate: u32) -> Option<f64> {
    estimate_pitch(samples, sample_rate, &PitchConfig::default()).map(|p| p.f0)
}

/// Biased autocorrelation peak picking with parabolic refinement.
///
/// The strongest local maximum of r(lag)/r(0) inside the search band wins;
/// frames whose best peak is below the voicing threshold are unpitched.
pub fn estimate_pitch(samples: &[f64], sample_rate: u32, cfg: &PitchConfig) -> Option<PitchEstimate> {
    let n = samples.len();
    let sr = sample_rate as f64;
    let min_lag = ((sr / cfg.max_hz).floor() as usize).max(2);
    let max_lag = ((sr / cfg.min_hz).ceil() as usize).min(n.saturating_sub(2));
    if n < 4 || min_lag >= max_lag {
        return None;
    }
    let energy = dot(samples, samples);
    if energy <= 0.0 {
        return None;
    }

    // r[k] holds lag (min_lag - 1 + k)
    let corr: Vec<f64> = (min_lag - 1..=max_lag + 1)
        .map(|lag| dot(&samples[..n - lag], &samples[lag..]) / energy)
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for k in 1..corr.len() - 1 {
        let (a, b, c) = (corr[k - 1], corr[k], corr[k + 1]);
        if b > a && b >= c && best.is_none_or(|(_, v)| b > v) {
            best = Some((k, b));
        }
    }
    let (k, _) = best?;
    let (_, peak) = parabolic(corr[k - 1], corr[k], corr[k + 1]);
    if peak < cfg.voicing_threshold {
        return None;
    }

    // The biased estimate leans towards shorter lags; locate the lag on the
    // length-corrected curve.
    let unbiased: Vec<f64> = corr
        .iter()
        .enumerate()
        .map(|(i, r)| r * n as f64 / (n - (min_lag - 1 + i)) as f64)
        .collect();
    let mut k = k;
    while k + 2 < unbiased.len() && unbiased[k + 1] > unbiased[k] {
        k += 1;
    }
    while k > 1 && unbiased[k - 1] > unbiased[k] {
        k -= 1;
    }
    let (offset, _) = parabolic(unbiased[k - 1], unbiased[k], unbiased[k + 1]);
    let lag = (min_lag - 1 + k) as f64 + offset;
    let f0 = sr / lag;
    (cfg.min_hz..=cfg.max_hz).contains(&f0).then_some(PitchEstimate {
        f0,
        lag,
        strength: peak,
    })
}

/// Harmonics-to-noise ratio in dB from the normalized autocorrelation at
/// the pitch lag. Unpitched frames have no HNR.
pub fn hnr(samples: &[f64], sample_rate: u32, f0: Option<f64>) -> Option<f64> {
    let f0 = f0.filter(|f| *f > 0.0)?;
    let n = samples.len();
    let target = sample_rate as f64 / f0;
    let lo = (target.floor() as usize).saturating_sub(1).max(1);
    let hi = ((target.ceil() as usize) + 1).min(n.saturating_sub(2));
    if lo > hi {
        return None;
    }
    let nccf: Vec<f64> = (lo - 1..=hi + 1)
        .map(|lag| normalized_correlation(samples, lag))
        .collect();
    let (k, _) = nccf[1..nccf.len() - 1]
        .iter()
        .enumerate()
        .fold((1, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i + 1, v) } else { acc });
    let (a, b, c) = (nccf[k - 1], nccf[k], nccf[k + 1]);
    let r = if b >= a && b >= c { parabolic(a, b, c).1 } else { b };
    Some(hnr_from_correlation(r))
}

pub(crate) const HNR_FLOOR_DB: f64 = -20.0;
pub(crate) const HNR_CEIL_DB: f64 = 40.0;

/// `10 log10(r / (1 - r))`, clamped to the representable range.
pub fn hnr_from_correlation(r: f64) -> f64 {
    if r <= 0.0 {
        return HNR_FLOOR_DB;
    }
    if r >= 1.0 {
        return HNR_CEIL_DB;
    }
    (10.0 * (r / (1.0 - r)).log10()).clamp(HNR_FLOOR_DB, HNR_CEIL_DB)
}

fn normalized_correlation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    let (a, b) = (&x[..n - lag], &x[lag..]);
    let denom = (dot(a, a) * dot(b, b)).sqrt();
    if denom <= 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

/// Vertex of the parabola through three equally spaced points: (offset, value).
pub(crate) fn parabolic(a: f64, b: f64, c: f64) -> (f64, f64) {
    let denom = a - 2.0 * b + c;
    if denom.abs() < f64::EPSILON {
        return (0.0, b);
    }
    let offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
    (offset, b - 0.25 * (a - c) * offset)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
