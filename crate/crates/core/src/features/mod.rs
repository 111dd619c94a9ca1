//! Frame-level low-level descriptors and segment timing statistics.

mod pitch;
mod pulses;
mod spectral;
mod timing;

pub use pitch::{estimate_f0, estimate_pitch, hnr, hnr_from_correlation, PitchConfig, PitchEstimate};
pub use pulses::{jitter, shimmer, track_pulses, PeriodTrack, MIN_PITCHED_FRAMES};
pub use spectral::{spectral_flux, SpectrumAnalyzer};
pub use timing::{pause_stats, tempo, IntensityPoint, PauseStats, SegmentTempo, TimingConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Frame;
use crate::par::{map_collect, Parallelism};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("need at least 2 periods, got {0}")]
    InsufficientPeriods(usize),
}

/// Floor added to the mean square before taking the log.
pub const POWER_FLOOR: f64 = 1e-12;

/// Frame intensity in dB relative to full scale.
pub fn intensity(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 10.0 * POWER_FLOOR.log10();
    }
    let mean_sq = samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64;
    10.0 * (mean_sq + POWER_FLOOR).log10()
}

/// Mean voiced frame intensity minus mean unvoiced frame intensity.
pub fn snr_estimate(voiced_db: &[f64], unvoiced_db: &[f64]) -> Option<f64> {
    if voiced_db.is_empty() || unvoiced_db.is_empty() {
        return None;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Some(mean(voiced_db) - mean(unvoiced_db))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub pitch: PitchConfig,
    pub timing: TimingConfig,
}

/// Descriptors for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLld {
    pub frame_index: usize,
    pub start_time: f64,
    pub voiced: bool,
    pub quality_ok: bool,
    pub f0: Option<f64>,
    pub intensity_db: f64,
    pub spectral_flux: f64,
    pub hnr_db: Option<f64>,
}

/// Per-frame extraction with the spectral state needed for flux.
pub struct LldExtractor {
    analyzer: SpectrumAnalyzer,
    config: FeatureConfig,
    sample_rate: u32,
    prev_spectrum: Option<Vec<f64>>,
}

impl LldExtractor {
    pub fn new(frame_len: usize, sample_rate: u32, config: FeatureConfig) -> Self {
        Self {
            analyzer: SpectrumAnalyzer::new(frame_len),
            config,
            sample_rate,
            prev_spectrum: None,
        }
    }

    /// Extract descriptors for consecutive frames.
    ///
    /// Pitch, intensity, HNR and spectra are independent per frame and run
    /// under `mode`; flux is chained over the stream in order, with the
    /// first frame of a stream at 0.
    pub fn extract(&mut self, frames: &[Frame], mode: Parallelism) -> Vec<FrameLld> {
        let sr = self.sample_rate;
        let pitch_cfg = self.config.pitch;
        let analyzer = &self.analyzer;
        let partial = map_collect(mode, frames, |frame| {
            let f0 = estimate_pitch(&frame.samples, sr, &pitch_cfg).map(|p| p.f0);
            (
                f0,
                intensity(&frame.samples),
                hnr(&frame.samples, sr, f0),
                analyzer.magnitude(&frame.samples),
            )
        });

        let mut out = Vec::with_capacity(frames.len());
        for (frame, (f0, intensity_db, hnr_db, spectrum)) in frames.iter().zip(partial) {
            let flux = self
                .prev_spectrum
                .as_deref()
                .map_or(0.0, |prev| spectral_flux(prev, &spectrum));
            self.prev_spectrum = Some(spectrum);
            out.push(FrameLld {
                frame_index: frame.index,
                start_time: frame.start_time,
                voiced: frame.voiced,
                quality_ok: frame.quality_ok,
                f0,
                intensity_db,
                spectral_flux: flux,
                hnr_db,
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{frame_signal, SampleBuffer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn sine(amp: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * 220.0 * i as f64 / 16_000.0).sin()).collect()
    }

    #[test]
    fn intensity_reference_points() {
        assert!((intensity(&[0.0; 400]) + 120.0).abs() < 1e-9);
        assert!(intensity(&[1.0; 400]).abs() < 1e-9);
        let db = intensity(&sine(0.5, 400));
        assert!((db - 10.0 * 0.125f64.log10()).abs() < 0.1, "{db}");
    }

    #[test]
    fn gain_shifts_intensity_by_20log10() {
        let s = sine(0.1, 400);
        let k: f64 = 3.0;
        let loud: Vec<f64> = s.iter().map(|v| v * k).collect();
        let shift = intensity(&loud) - intensity(&s);
        assert!((shift - 20.0 * k.log10()).abs() < 1e-6);
    }

    #[test]
    fn snr_of_tone_over_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // gaussian floor with the power of a 0.005-amplitude sinusoid
        let normal = Normal::new(0.0, 0.005 / 2f64.sqrt()).unwrap();
        let voiced: Vec<f64> = (0..20).map(|_| intensity(&sine(0.5, 400))).collect();
        let unvoiced: Vec<f64> = (0..20)
            .map(|_| intensity(&(0..400).map(|_| normal.sample(&mut rng)).collect::<Vec<_>>()))
            .collect();
        let snr = snr_estimate(&voiced, &unvoiced).unwrap();
        assert!((snr - 40.0).abs() < 1.0, "{snr}");
        assert_eq!(snr_estimate(&voiced, &voiced), Some(0.0));
        assert_eq!(snr_estimate(&voiced, &[]), None);
    }

    #[test]
    fn extraction_is_deterministic_across_modes() {
        let buf = SampleBuffer::new(sine(0.4, 16_000), 16_000);
        let frames = frame_signal(&buf);
        let mut a = LldExtractor::new(400, 16_000, FeatureConfig::default());
        let mut b = LldExtractor::new(400, 16_000, FeatureConfig::default());
        let seq = a.extract(&frames, Parallelism::Sequential);
        let par = b.extract(&frames, Parallelism::Parallel);
        assert_eq!(seq, par);
        assert_eq!(seq[0].spectral_flux, 0.0);
    }

    #[test]
    fn hop_shift_shifts_tracks() {
        let mut s = sine(0.4, 8_000);
        let frames = frame_signal(&SampleBuffer::new(s.clone(), 16_000));
        let mut shifted = vec![0.0; 160 * 3];
        shifted.append(&mut s);
        let frames_shifted = frame_signal(&SampleBuffer::new(shifted, 16_000));
        let mut ex = LldExtractor::new(400, 16_000, FeatureConfig::default());
        let a = ex.extract(&frames, Parallelism::Sequential);
        let mut ex = LldExtractor::new(400, 16_000, FeatureConfig::default());
        let b = ex.extract(&frames_shifted, Parallelism::Sequential);
        for (x, y) in a.iter().zip(&b[3..]).skip(1) {
            assert_eq!(x.f0, y.f0);
            assert_eq!(x.intensity_db, y.intensity_db);
            assert_eq!(x.hnr_db, y.hnr_db);
            assert_eq!(x.spectral_flux, y.spectral_flux);
        }
    }
}
