use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{Frame, FrameLayout};
use crate::features::intensity;

/// Gaps shorter than this many unvoiced frames are bridged.
pub const DEFAULT_HANGOVER_FRAMES: usize = 3;

/// Per-frame speech/non-speech decision.
///
/// Implementations may keep state across frames (noise floor, model
/// context) and are fed frames in time order.
pub trait VoiceDetector: Send {
    fn classify(&mut self, frame: &Frame) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    /// Required energy above the tracked noise floor.
    pub margin_db: f64,
    /// Energy below this is never speech, whatever the floor says.
    pub min_threshold_db: f64,
    /// Ceiling for the tracked floor so sustained speech is not absorbed.
    pub max_floor_db: f64,
    /// Upward drift of the floor per frame while energy is above it.
    pub floor_rise_db: f64,
    pub initial_floor_db: f64,
    /// Zero-crossing rate above which a frame is treated as noise.
    pub zcr_ceiling: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            margin_db: 10.0,
            min_threshold_db: -55.0,
            max_floor_db: -45.0,
            floor_rise_db: 0.01,
            initial_floor_db: -90.0,
            zcr_ceiling: 0.3,
        }
    }
}

/// Log-energy gate against an exponential minimum tracker, with a
/// zero-crossing ceiling.
#[derive(Debug, Clone)]
pub struct EnergyVad {
    config: VadConfig,
    floor_db: f64,
}

impl EnergyVad {
    pub fn new(config: VadConfig) -> Self {
        Self {
            floor_db: config.initial_floor_db,
            config,
        }
    }

    pub fn noise_floor_db(&self) -> f64 {
        self.floor_db
    }

    /// Decision for given frame statistics at a fixed noise floor.
    pub fn decide(&self, energy_db: f64, zcr: f64, floor_db: f64) -> bool {
        let threshold = (floor_db + self.config.margin_db).max(self.config.min_threshold_db);
        energy_db > threshold && zcr <= self.config.zcr_ceiling
    }

    fn track(&mut self, energy_db: f64) {
        if energy_db < self.floor_db {
            self.floor_db = energy_db;
        } else {
            self.floor_db = (self.floor_db + self.config.floor_rise_db)
                .min(energy_db)
                .min(self.config.max_floor_db);
        }
    }
}

impl Default for EnergyVad {
    fn default() -> Self {
        Self::new(VadConfig::default())
    }
}

impl VoiceDetector for EnergyVad {
    fn classify(&mut self, frame: &Frame) -> bool {
        let energy = intensity(&frame.samples);
        let voiced = self.decide(energy, zero_crossing_rate(&frame.samples), self.floor_db);
        self.track(energy);
        voiced
    }
}

/// Fraction of adjacent sample pairs that change sign.
pub(crate) fn zero_crossing_rate(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let crossings = samples
        .windows(2)
        .filter(|w| (w[0] < 0.0) != (w[1] < 0.0))
        .count();
    crossings as f64 / (samples.len() - 1) as f64
}

/// Streaming gap bridging: a run of fewer than `max_gap` unvoiced frames
/// between two voiced frames is relabelled voiced.
///
/// Decisions are released with at most `max_gap - 1` frames of delay.
#[derive(Debug, Clone)]
pub struct HangoverGate {
    max_gap: usize,
    pending: Vec<usize>,
    after_voiced: bool,
}

impl HangoverGate {
    pub fn new(max_gap: usize) -> Self {
        Self {
            max_gap,
            pending: Vec::new(),
            after_voiced: false,
        }
    }

    pub fn push(&mut self, index: usize, voiced: bool) -> Vec<(usize, bool)> {
        let mut out = Vec::new();
        if voiced {
            let bridge = self.after_voiced && self.pending.len() < self.max_gap;
            out.extend(self.pending.drain(..).map(|i| (i, bridge)));
            out.push((index, true));
            self.after_voiced = true;
        } else if self.after_voiced {
            self.pending.push(index);
            if self.pending.len() >= self.max_gap {
                out.extend(self.pending.drain(..).map(|i| (i, false)));
                self.after_voiced = false;
            }
        } else {
            out.push((index, false));
        }
        out
    }

    pub fn finish(&mut self) -> Vec<(usize, bool)> {
        self.after_voiced = false;
        self.pending.drain(..).map(|i| (i, false)).collect()
    }
}

/// A maximal run of voiced frames, `[start_time, end_time)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoicedSegment {
    pub start_time: f64,
    pub end_time: f64,
    pub frame_indices: Range<usize>,
}

impl VoicedSegment {
    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }
}

/// Turns a stream of final voiced flags into segments.
#[derive(Debug, Clone)]
pub struct SegmentBuilder {
    layout: FrameLayout,
    open: Option<Range<usize>>,
}

impl SegmentBuilder {
    pub fn new(layout: FrameLayout) -> Self {
        Self { layout, open: None }
    }

    pub fn push(&mut self, index: usize, voiced: bool) -> Option<VoicedSegment> {
        match (&mut self.open, voiced) {
            (Some(run), true) if run.end == index => {
                run.end = index + 1;
                None
            }
            (Some(_), true) => {
                let closed = self.close();
                self.open = Some(index..index + 1);
                closed
            }
            (None, true) => {
                self.open = Some(index..index + 1);
                None
            }
            (_, false) => self.close(),
        }
    }

    /// Segment still accumulating, if any.
    pub fn open_segment(&self) -> Option<VoicedSegment> {
        self.open.clone().map(|r| self.segment(r))
    }

    pub fn finish(&mut self) -> Option<VoicedSegment> {
        self.close()
    }

    fn close(&mut self) -> Option<VoicedSegment> {
        self.open.take().map(|r| self.segment(r))
    }

    fn segment(&self, run: Range<usize>) -> VoicedSegment {
        VoicedSegment {
            start_time: self.layout.frame_start(run.start),
            end_time: self.layout.frame_start(run.end),
            frame_indices: run,
        }
    }
}

/// Segments from a complete sequence of (already bridged) voiced flags.
pub fn segments_from_flags(flags: &[bool], layout: FrameLayout) -> Vec<VoicedSegment> {
    let mut builder = SegmentBuilder::new(layout);
    let mut out: Vec<_> = flags
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| builder.push(i, v))
        .collect();
    out.extend(builder.finish());
    out
}

/// Label frames voiced/unvoiced, bridge short gaps and collect segments.
pub fn vad_gate(
    frames: &mut [Frame],
    detector: &mut dyn VoiceDetector,
    layout: FrameLayout,
) -> Vec<VoicedSegment> {
    let first = frames.first().map(|f| f.index).unwrap_or(0);
    let mut gate = HangoverGate::new(DEFAULT_HANGOVER_FRAMES);
    let mut decided = Vec::with_capacity(frames.len());
    for frame in frames.iter() {
        let raw = detector.classify(frame);
        decided.extend(gate.push(frame.index, raw));
    }
    decided.extend(gate.finish());

    let mut builder = SegmentBuilder::new(layout);
    let mut segments = Vec::new();
    for (index, voiced) in decided {
        frames[index - first].voiced = voiced;
        segments.extend(builder.push(index, voiced));
    }
    segments.extend(builder.finish());
    segments
}
