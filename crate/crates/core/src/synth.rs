//! Deterministic synthetic speech-like streams for tests and benchmarks.

use std::f64::consts::PI;
use std::io::{Cursor, Seek, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::CANONICAL_RATE;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid profile: {0}")]
    Validation(String),
    #[error("wav encoding failed: {0}")]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Baseline,
    Depressed,
    Recovery,
}

/// Targets for one stretch of synthetic speech.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub phase: Phase,
    /// Seconds.
    pub duration: f64,
    pub f0_mean: f64,
    /// Standard deviation of the slow intonation contour, Hz.
    pub f0_std: f64,
    /// Pauses per minute.
    pub pause_rate: f64,
    /// Mean pause length, seconds.
    pub pause_duration: f64,
    /// Syllable (amplitude modulation) rate, Hz.
    pub articulation_rate: f64,
    /// Peak amplitude, full scale = 1.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Relative cycle-to-cycle period noise.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_amplitude() -> f64 {
    0.3
}
fn default_jitter() -> f64 {
    0.005
}

impl SyntheticProfile {
    pub fn baseline(duration: f64) -> Self {
        Self {
            phase: Phase::Baseline,
            duration,
            f0_mean: 180.0,
            f0_std: 25.0,
            pause_rate: 4.0,
            pause_duration: 0.4,
            articulation_rate: 5.0,
            amplitude: 0.3,
            jitter: 0.005,
        }
    }

    pub fn depressed(duration: f64) -> Self {
        Self {
            phase: Phase::Depressed,
            duration,
            f0_mean: 160.0,
            f0_std: 6.0,
            pause_rate: 10.0,
            pause_duration: 1.2,
            articulation_rate: 3.0,
            amplitude: 0.2,
            jitter: 0.005,
        }
    }

    pub fn recovery(duration: f64) -> Self {
        Self {
            phase: Phase::Recovery,
            ..Self::baseline(duration)
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Validation(format!("{:?}: {m}", self.phase)));
        let finite = [
            self.duration,
            self.f0_mean,
            self.f0_std,
            self.pause_rate,
            self.pause_duration,
            self.articulation_rate,
            self.amplitude,
            self.jitter,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite target");
        }
        if self.duration <= 0.0 {
            return bad("duration must be positive");
        }
        let swing = self.f0_std * 2f64.sqrt();
        if self.f0_std < 0.0 || self.f0_mean - swing < 70.0 || self.f0_mean + swing > 450.0 {
            return bad("f0 contour must stay within 70-450 Hz");
        }
        if self.pause_rate < 0.0 || self.pause_duration < 0.0 {
            return bad("pause targets must be non-negative");
        }
        if self.pause_rate * self.pause_duration >= 60.0 {
            return bad("pauses would fill the whole phase");
        }
        if !(0.5..=12.0).contains(&self.articulation_rate) {
            return bad("articulation rate must be within 0.5-12 Hz");
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 0.9) {
            return bad("amplitude must be within (0, 0.9]");
        }
        if !(0.0..0.1).contains(&self.jitter) {
            return bad("jitter must be within [0, 0.1)");
        }
        Ok(())
    }
}

/// A sequence of phases rendered at one sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    pub phases: Vec<SyntheticProfile>,
}

fn default_rate() -> u32 {
    CANONICAL_RATE
}

impl SynthSpec {
    pub fn new(phases: Vec<SyntheticProfile>) -> Self {
        Self {
            sample_rate: CANONICAL_RATE,
            phases,
        }
    }

    /// Baseline, depressed and recovery phases of `secs` each.
    pub fn three_phase(secs: f64) -> Self {
        Self::new(vec![
            SyntheticProfile::baseline(secs),
            SyntheticProfile::depressed(secs),
            SyntheticProfile::recovery(secs),
        ])
    }

    pub fn duration(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }
}

const HARMONICS: usize = 8;
const NOISE_FLOOR: f64 = 2e-4;
/// Period of the intonation contour, seconds.
const CONTOUR_PERIOD: f64 = 1.7;
/// Envelope floor between syllables relative to the peak.
const ENVELOPE_FLOOR: f64 = 0.2;

/// Render the phases into normalized samples.
pub fn synth_stream(spec: &SynthSpec, seed: u64) -> Result<Vec<f64>, SynthError> {
    if spec.phases.is_empty() {
        return Err(SynthError::Validation("no phases".into()));
    }
    if !(8_000..=96_000).contains(&spec.sample_rate) {
        return Err(SynthError::Validation(format!("sample rate {}", spec.sample_rate)));
    }
    for p in &spec.phases {
        p.validate()?;
    }
    let sr = spec.sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, NOISE_FLOOR).expect("valid sigma");
    let mut out = Vec::with_capacity((spec.duration() * sr).ceil() as usize);

    let mut glottal_phase = 0.0f64;
    let mut cycle_scale = 1.0f64;
    let mut syllable_phase = 0.0f64;
    let mut t_global = 0.0f64;
    let contour_offset = rng.random_range(0.0..2.0 * PI);

    for p in &spec.phases {
        let n = (p.duration * sr).round() as usize;
        let pauses = schedule_pauses(p, &mut rng);
        let amp_norm: f64 = (1..=HARMONICS).map(|k| 1.0 / k as f64).sum();
        let mut next_pause = 0;
        for i in 0..n {
            let t = i as f64 / sr;
            while next_pause < pauses.len() && t >= pauses[next_pause].1 {
                next_pause += 1;
            }
            let in_pause = pauses
                .get(next_pause)
                .is_some_and(|&(start, end)| t >= start && t < end);
            let mut s = noise.sample(&mut rng);
            if !in_pause {
                let contour = (2.0 * PI * t_global / CONTOUR_PERIOD + contour_offset).sin();
                let f0 = p.f0_mean + p.f0_std * 2f64.sqrt() * contour;
                let prev = glottal_phase;
                glottal_phase += f0 * cycle_scale / sr;
                if glottal_phase.floor() > prev.floor() && p.jitter > 0.0 {
                    cycle_scale = 1.0 + rng.random_range(-p.jitter..p.jitter);
                }
                syllable_phase += p.articulation_rate / sr;
                let env = ENVELOPE_FLOOR
                    + (1.0 - ENVELOPE_FLOOR) * 0.5 * (1.0 - (2.0 * PI * syllable_phase).cos());
                let theta = 2.0 * PI * glottal_phase;
                let voice: f64 = (1..=HARMONICS)
                    .map(|k| (k as f64 * theta).sin() / k as f64)
                    .sum::<f64>()
                    / amp_norm;
                s += p.amplitude * env * voice;
            }
            out.push(s.clamp(-1.0, 1.0));
            t_global += 1.0 / sr;
        }
    }
    Ok(out)
}

/// Pause intervals (start, end) in phase-relative seconds, roughly evenly
/// spread with ±25% spacing noise.
fn schedule_pauses(p: &SyntheticProfile, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    if p.pause_rate <= 0.0 || p.pause_duration <= 0.0 {
        return Vec::new();
    }
    let spacing = 60.0 / p.pause_rate;
    let mut out = Vec::new();
    let mut t = spacing * rng.random_range(0.25..0.75);
    while t < p.duration {
        let len = p.pause_duration * rng.random_range(0.8..1.2);
        out.push((t, (t + len).min(p.duration)));
        t += len + (spacing - p.pause_duration).max(0.2) * rng.random_range(0.75..1.25);
    }
    out
}

/// Encode samples as 16-bit mono PCM WAV.
pub fn write_wav<W: Write + Seek>(writer: W, samples: &[f64], sample_rate: u32) -> Result<(), SynthError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::new(writer, spec)?;
    for s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}

pub fn wav_bytes(samples: &[f64], sample_rate: u32) -> Result<Vec<u8>, SynthError> {
    let mut cursor = Cursor::new(Vec::new());
    write_wav(&mut cursor, samples, sample_rate)?;
    Ok(cursor.into_inner())
}

/// Render and write a WAV file.
pub fn synth_to_file(spec: &SynthSpec, seed: u64, path: &Path) -> Result<(), SynthError> {
    let samples = synth_stream(spec, seed)?;
    std::fs::write(path, wav_bytes(&samples, spec.sample_rate)?)?;
    Ok(())
}
