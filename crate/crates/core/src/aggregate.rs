//! Windowed functionals over frame descriptors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{snr_estimate, FrameLld, PauseStats, PeriodTrack, SegmentTempo};

/// Fixed window length in seconds.
pub const WINDOW_SECS: f64 = 10.0;
/// Windows with less speech than this are flagged low quality.
pub const MIN_VOICED_FRACTION: f64 = 0.1;

/// Metric names produced by the built-in extractors.
pub mod metric {
    pub const F0_AVG: &str = "f0_avg";
    pub const F0_STD: &str = "f0_std";
    pub const F0_RANGE: &str = "f0_range";
    pub const INTENSITY_STD: &str = "intensity_std";
    pub const INTENSITY_RANGE: &str = "intensity_range";
    pub const JITTER: &str = "jitter";
    pub const SHIMMER: &str = "shimmer";
    pub const HNR: &str = "hnr";
    pub const SNR: &str = "snr";
    pub const SPECTRAL_FLUX_MEAN: &str = "spectral_flux_mean";
    pub const PAUSE_DURATION: &str = "pause_duration";
    pub const PAUSE_FREQUENCY: &str = "pause_frequency";
    pub const SPEECH_RATE: &str = "speech_rate";
    pub const ARTICULATION_RATE: &str = "articulation_rate";
    pub const GLOTTAL_PULSE_RATE: &str = "glottal_pulse_rate";

    pub const ALL: [&str; 15] = [
        F0_AVG,
        F0_STD,
        F0_RANGE,
        INTENSITY_STD,
        INTENSITY_RANGE,
        JITTER,
        SHIMMER,
        HNR,
        SNR,
        SPECTRAL_FLUX_MEAN,
        PAUSE_DURATION,
        PAUSE_FREQUENCY,
        SPEECH_RATE,
        ARTICULATION_RATE,
        GLOTTAL_PULSE_RATE,
    ];
}

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("frame at {got}s arrived after {last}s")]
    StreamOrder { last: f64, got: f64 },
}

/// High-level descriptors for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HldWindow {
    pub window_start: f64,
    pub window_len: f64,
    /// Missing metrics are absent, never zero-filled.
    pub metrics: BTreeMap<String, f64>,
    pub voiced_fraction: f64,
    pub quality_ok: bool,
}

impl HldWindow {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// Everything measured inside one window.
#[derive(Debug, Clone, Copy)]
pub struct WindowEvidence<'a> {
    pub window_start: f64,
    pub window_len: f64,
    pub frames: &'a [FrameLld],
    pub tempo: Option<&'a SegmentTempo>,
    pub pauses: Option<PauseStats>,
    pub tracks: &'a [PeriodTrack],
}

/// Mean, population standard deviation and range.
fn moments(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Some((mean, var.sqrt(), hi - lo))
}

/// Perturbation pooled over several sequences: within-sequence absolute
/// differences averaged, divided by the overall mean.
fn pooled_perturbation<'a>(seqs: impl Iterator<Item = &'a [f64]>) -> Option<f64> {
    let (mut diff_sum, mut diff_n, mut sum, mut n) = (0.0, 0usize, 0.0, 0usize);
    for s in seqs {
        diff_sum += s.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
        diff_n += s.len().saturating_sub(1);
        sum += s.iter().sum::<f64>();
        n += s.len();
    }
    if diff_n == 0 || sum == 0.0 {
        return None;
    }
    Some((diff_sum / diff_n as f64) / (sum / n as f64))
}

/// Compute the window's functionals over voiced, good-quality frames.
pub fn aggregate_window(ev: &WindowEvidence<'_>) -> HldWindow {
    let total = ev.frames.len();
    let voiced_count = ev.frames.iter().filter(|f| f.voiced).count();
    let voiced_fraction = if total == 0 {
        0.0
    } else {
        voiced_count as f64 / total as f64
    };
    let usable: Vec<&FrameLld> = ev.frames.iter().filter(|f| f.voiced && f.quality_ok).collect();

    let mut metrics = BTreeMap::new();
    if usable.is_empty() {
        return HldWindow {
            window_start: ev.window_start,
            window_len: ev.window_len,
            metrics,
            voiced_fraction,
            quality_ok: false,
        };
    }
    let mut put = |name: &str, value: Option<f64>| {
        if let Some(v) = value.filter(|v| v.is_finite()) {
            metrics.insert(name.to_string(), v);
        }
    };

    let f0: Vec<f64> = usable.iter().filter_map(|f| f.f0).collect();
    if let Some((mean, std, range)) = moments(&f0) {
        put(metric::F0_AVG, Some(mean));
        put(metric::F0_STD, Some(std));
        put(metric::F0_RANGE, Some(range));
    }
    let voiced_db: Vec<f64> = usable.iter().map(|f| f.intensity_db).collect();
    if let Some((_, std, range)) = moments(&voiced_db) {
        put(metric::INTENSITY_STD, Some(std));
        put(metric::INTENSITY_RANGE, Some(range));
    }
    let hnr: Vec<f64> = usable.iter().filter_map(|f| f.hnr_db).collect();
    put(metric::HNR, moments(&hnr).map(|m| m.0));
    let flux: Vec<f64> = usable.iter().map(|f| f.spectral_flux).collect();
    put(metric::SPECTRAL_FLUX_MEAN, moments(&flux).map(|m| m.0));

    let unvoiced_db: Vec<f64> = ev
        .frames
        .iter()
        .filter(|f| !f.voiced && f.quality_ok)
        .map(|f| f.intensity_db)
        .collect();
    put(metric::SNR, snr_estimate(&voiced_db, &unvoiced_db));

    put(
        metric::JITTER,
        pooled_perturbation(ev.tracks.iter().map(|t| t.periods.as_slice())),
    );
    put(
        metric::SHIMMER,
        pooled_perturbation(ev.tracks.iter().map(|t| t.amplitudes.as_slice())),
    );
    let tracked: f64 = ev.tracks.iter().map(|t| t.duration).sum();
    if tracked > 0.0 {
        let pulses: usize = ev.tracks.iter().map(|t| t.pulse_times.len()).sum();
        put(metric::GLOTTAL_PULSE_RATE, Some(pulses as f64 / tracked));
    }

    if let Some(p) = ev.pauses {
        put(metric::PAUSE_DURATION, Some(p.mean_duration));
        put(metric::PAUSE_FREQUENCY, Some(p.frequency_per_min));
    }
    if let Some(t) = ev.tempo {
        put(metric::SPEECH_RATE, Some(t.speech_rate));
        put(metric::ARTICULATION_RATE, Some(t.articulation_rate));
    }

    HldWindow {
        window_start: ev.window_start,
        window_len: ev.window_len,
        metrics,
        voiced_fraction,
        quality_ok: voiced_fraction >= MIN_VOICED_FRACTION,
    }
}

/// Frames of one elapsed window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFrames {
    pub index: usize,
    pub window_start: f64,
    pub frames: Vec<FrameLld>,
}

/// Splits an ordered frame stream into back-to-back windows anchored at
/// the stream origin.
#[derive(Debug, Clone)]
pub struct Windower {
    window_len: f64,
    current: usize,
    buffer: Vec<FrameLld>,
    last_time: Option<f64>,
}

impl Windower {
    pub fn new(window_len: f64) -> Self {
        Self {
            window_len,
            current: 0,
            buffer: Vec::new(),
            last_time: None,
        }
    }

    fn window_of(&self, t: f64) -> usize {
        (t / self.window_len).floor().max(0.0) as usize
    }

    /// Add a frame; returns the windows it closes.
    pub fn push(&mut self, frame: FrameLld) -> Result<Vec<WindowFrames>, AggregateError> {
        if let Some(last) = self.last_time {
            if frame.start_time <= last {
                return Err(AggregateError::StreamOrder {
                    last,
                    got: frame.start_time,
                });
            }
        }
        self.last_time = Some(frame.start_time);
        let target = self.window_of(frame.start_time);
        let closed = self.close_until(target);
        self.buffer.push(frame);
        Ok(closed)
    }

    /// Close every window that ends at or before `t` seconds.
    pub fn close_through(&mut self, t: f64) -> Vec<WindowFrames> {
        let complete = (t / self.window_len + 1e-9).floor().max(0.0) as usize;
        self.close_until(complete)
    }

    fn close_until(&mut self, target: usize) -> Vec<WindowFrames> {
        let mut out = Vec::new();
        while self.current < target {
            let window_start = self.current as f64 * self.window_len;
            out.push(WindowFrames {
                index: self.current,
                window_start,
                frames: std::mem::take(&mut self.buffer),
            });
            self.current += 1;
        }
        out
    }

    /// Index of the window currently accumulating.
    pub fn open_window(&self) -> usize {
        self.current
    }
}

/// Aggregate a complete frame stream; trailing partial windows are dropped.
pub fn window_stream(
    frames: impl IntoIterator<Item = FrameLld>,
    stream_secs: f64,
) -> Result<Vec<WindowFrames>, AggregateError> {
    let mut w = Windower::new(WINDOW_SECS);
    let mut out = Vec::new();
    for f in frames {
        out.extend(w.push(f)?);
    }
    out.extend(w.close_through(stream_secs));
    Ok(out)
}
