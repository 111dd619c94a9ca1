use super::pitch::parabolic;
use super::FeatureError;
use crate::ingest::FrameLayout;

/// Minimum number of pitched frames before a run is worth tracking.
pub const MIN_PITCHED_FRAMES: usize = 3;

/// Glottal pulse instants and the period/amplitude sequences derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodTrack {
    /// Seconds from stream origin, ascending.
    pub pulse_times: Vec<f64>,
    /// Successive differences of `pulse_times`.
    pub periods: Vec<f64>,
    /// Peak amplitude at each pulse.
    pub amplitudes: Vec<f64>,
    /// Length of the analysed run in seconds.
    pub duration: f64,
}

impl PeriodTrack {
    pub fn from_pulses(pulse_times: Vec<f64>, amplitudes: Vec<f64>, duration: f64) -> Self {
        let periods = pulse_times.windows(2).map(|w| w[1] - w[0]).collect();
        Self {
            pulse_times,
            periods,
            amplitudes,
            duration,
        }
    }

    /// Pulses per second over the run.
    pub fn pulse_rate(&self) -> f64 {
        if self.duration > 0.0 {
            self.pulse_times.len() as f64 / self.duration
        } else {
            0.0
        }
    }
}

/// Locate glottal pulses in a contiguous voiced run.
///
/// `samples` covers the run's frames back to back (first sample at
/// `start_time`); `f0_track` has one entry per frame. Pulses are waveform
/// maxima searched within a quarter period of the position predicted by the
/// local F0. Runs with fewer than [`MIN_PITCHED_FRAMES`] pitched frames
/// yield no track.
pub fn track_pulses(
    samples: &[f64],
    start_time: f64,
    layout: FrameLayout,
    f0_track: &[Option<f64>],
) -> Option<PeriodTrack> {
    if f0_track.iter().flatten().count() < MIN_PITCHED_FRAMES || samples.len() < 3 {
        return None;
    }
    let sr = layout.sample_rate as f64;
    let filled = fill_f0(f0_track);
    let period_at = |pos: usize| {
        let frame = (pos / layout.hop).min(filled.len() - 1);
        sr / filled[frame]
    };

    let n = samples.len();
    let mut times = Vec::new();
    let mut amps = Vec::new();

    let first_period = period_at(0).ceil() as usize;
    let mut last = argmax(samples, 0, first_period.min(n));
    loop {
        let (pos, amp) = refine(samples, last);
        times.push(start_time + pos / sr);
        amps.push(amp.abs());

        let period = period_at(last);
        let expected = last as f64 + period;
        if expected >= n as f64 {
            break;
        }
        let reach = 0.25 * period;
        let lo = ((expected - reach).ceil().max(0.0) as usize).max(last + 1);
        let hi = ((expected + reach).floor() as usize + 1).min(n);
        if lo >= hi {
            break;
        }
        last = argmax(samples, lo, hi);
    }

    Some(PeriodTrack::from_pulses(times, amps, n as f64 / sr))
}

fn fill_f0(track: &[Option<f64>]) -> Vec<f64> {
    let mut pitched: Vec<f64> = track.iter().flatten().copied().collect();
    pitched.sort_by(f64::total_cmp);
    let median = pitched[pitched.len() / 2];
    track.iter().map(|f| f.unwrap_or(median)).collect()
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    (lo..hi.max(lo + 1).min(x.len()))
        .fold(lo, |best, i| if x[i] > x[best] { i } else { best })
}

fn refine(x: &[f64], i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= x.len() {
        return (i as f64, x[i]);
    }
    let (offset, value) = parabolic(x[i - 1], x[i], x[i + 1]);
    (i as f64 + offset, value)
}

/// Local jitter: mean absolute difference of consecutive periods over the
/// mean period.
pub fn jitter(track: &PeriodTrack) -> Result<f64, FeatureError> {
    local_perturbation(&track.periods)
}

/// Local shimmer: mean absolute difference of consecutive amplitudes over
/// the mean amplitude.
pub fn shimmer(track: &PeriodTrack) -> Result<f64, FeatureError> {
    local_perturbation(&track.amplitudes)
}

pub(crate) fn local_perturbation(values: &[f64]) -> Result<f64, FeatureError> {
    if values.len() < 2 {
        return Err(FeatureError::InsufficientPeriods(values.len()));
    }
    let diffs: f64 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let mean_diff = diffs / (values.len() - 1) as f64;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        return Ok(0.0);
    }
    Ok(mean_diff / mean.abs())
}
