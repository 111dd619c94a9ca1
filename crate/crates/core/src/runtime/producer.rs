use std::collections::{BTreeMap, VecDeque};
use std::time::{Duration, Instant};

use crate::aggregate::{aggregate_window, HldWindow, WindowEvidence, WindowFrames, Windower, WINDOW_SECS};
use crate::features::{
    pause_stats, tempo, track_pulses, FeatureConfig, FrameLld, IntensityPoint, LldExtractor, PeriodTrack,
};
use crate::ingest::{
    EnergyVad, Frame, FrameLayout, HangoverGate, SegmentBuilder, VadConfig, VoiceDetector, VoicedSegment,
    CANONICAL_RATE, DEFAULT_HANGOVER_FRAMES,
};
use crate::par::Parallelism;

use super::PipelineError;

/// Length of the per-second frame summaries kept in raw_metrics.
pub const RAW_SUMMARY_SECS: f64 = 1.0;

/// Cuts an unbounded sample stream into 25 ms / 10 ms frames, matching
/// [`crate::ingest::frame_signal`] on the concatenated input.
#[derive(Debug, Clone)]
pub struct StreamFramer {
    layout: FrameLayout,
    /// Absolute index of `history[0]`.
    base: usize,
    history: Vec<f64>,
    next_frame: usize,
    total: usize,
}

impl StreamFramer {
    pub fn new(layout: FrameLayout) -> Self {
        Self {
            layout,
            base: 0,
            history: Vec::new(),
            next_frame: 0,
            total: 0,
        }
    }

    pub fn layout(&self) -> FrameLayout {
        self.layout
    }

    /// Samples received so far.
    pub fn total_samples(&self) -> usize {
        self.total
    }

    pub fn push(&mut self, samples: &[f64]) -> Vec<Frame> {
        self.history.extend_from_slice(samples);
        self.total += samples.len();
        let mut out = Vec::new();
        loop {
            let start = self.next_frame * self.layout.hop;
            let end = start + self.layout.frame_len;
            if end > self.total {
                break;
            }
            let slice = self.history[start - self.base..end - self.base].to_vec();
            out.push(Frame::new(self.next_frame, self.layout.frame_start(self.next_frame), slice));
            self.next_frame += 1;
        }
        out
    }

    /// Samples `[from, to)` by absolute index, if still retained.
    pub fn span(&self, from: usize, to: usize) -> Option<&[f64]> {
        (from >= self.base && to <= self.total && from <= to)
            .then(|| &self.history[from - self.base..to - self.base])
    }

    /// Drop retained samples before absolute index `keep_from`, never
    /// discarding samples still needed for unframed input.
    pub fn trim(&mut self, keep_from: usize) {
        let limit = keep_from.min(self.next_frame * self.layout.hop).min(self.total);
        if limit > self.base {
            self.history.drain(..limit - self.base);
            self.base = limit;
        }
    }
}

/// One-second summary of frame descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSummary {
    pub start: f64,
    pub metrics: BTreeMap<String, Option<f64>>,
}

/// Wall time spent per producing stage since the previous product.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProducerTimes {
    pub ingest: Duration,
    pub extract: Duration,
    pub aggregate: Duration,
}

/// A closed window with everything needed downstream.
#[derive(Debug, Clone)]
pub struct WindowProduct {
    pub index: usize,
    pub window: HldWindow,
    pub raw: Vec<RawSummary>,
    pub times: ProducerTimes,
}

/// Ingest, feature extraction and aggregation for one stream.
pub struct WindowProducer {
    framer: StreamFramer,
    vad: EnergyVad,
    gate: HangoverGate,
    held: VecDeque<Frame>,
    extractor: LldExtractor,
    segments: SegmentBuilder,
    closed_segments: Vec<VoicedSegment>,
    windower: Windower,
    features: FeatureConfig,
    mode: Parallelism,
    times: ProducerTimes,
}

impl WindowProducer {
    pub fn new(vad: VadConfig, features: FeatureConfig, mode: Parallelism) -> Self {
        let layout = FrameLayout::for_rate(CANONICAL_RATE);
        Self {
            framer: StreamFramer::new(layout),
            vad: EnergyVad::new(vad),
            gate: HangoverGate::new(DEFAULT_HANGOVER_FRAMES),
            held: VecDeque::new(),
            extractor: LldExtractor::new(layout.frame_len, CANONICAL_RATE, features),
            segments: SegmentBuilder::new(layout),
            closed_segments: Vec::new(),
            windower: Windower::new(WINDOW_SECS),
            features,
            mode,
            times: ProducerTimes::default(),
        }
    }

    /// Stream seconds received so far.
    pub fn elapsed(&self) -> f64 {
        self.framer.total_samples() as f64 / CANONICAL_RATE as f64
    }

    /// Feed samples at the canonical rate; returns windows that closed.
    pub fn push(&mut self, samples: &[f64]) -> Result<Vec<WindowProduct>, PipelineError> {
        let t = Instant::now();
        let frames = self.framer.push(samples);
        let mut decided = Vec::new();
        for frame in frames {
            let raw = self.vad.classify(&frame);
            self.held.push_back(frame);
            decided.extend(self.gate.push(self.held.back().map_or(0, |f| f.index), raw));
        }
        let batch = self.release(decided);
        self.times.ingest += t.elapsed();
        self.process(batch)
    }

    /// Flush the stream; only complete windows are emitted.
    pub fn finish(&mut self) -> Result<Vec<WindowProduct>, PipelineError> {
        let t = Instant::now();
        let decided = self.gate.finish();
        let batch = self.release(decided);
        self.times.ingest += t.elapsed();
        let mut out = self.process(batch)?;
        self.closed_segments.extend(self.segments.finish());
        let closed = self.windower.close_through(self.elapsed());
        for wf in closed {
            out.push(self.build(wf));
        }
        Ok(out)
    }

    fn release(&mut self, decided: Vec<(usize, bool)>) -> Vec<Frame> {
        decided
            .into_iter()
            .map(|(index, voiced)| {
                let mut frame = self.held.pop_front().expect("decisions follow held frames");
                debug_assert_eq!(frame.index, index);
                frame.voiced = voiced;
                frame
            })
            .collect()
    }

    fn process(&mut self, batch: Vec<Frame>) -> Result<Vec<WindowProduct>, PipelineError> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let t = Instant::now();
        let llds = self.extractor.extract(&batch, self.mode);
        self.times.extract += t.elapsed();

        let mut out = Vec::new();
        for lld in llds {
            self.closed_segments.extend(self.segments.push(lld.frame_index, lld.voiced));
            for wf in self.windower.push(lld)? {
                out.push(self.build(wf));
            }
        }
        Ok(out)
    }

    fn build(&mut self, wf: WindowFrames) -> WindowProduct {
        let t = Instant::now();
        let layout = self.framer.layout();
        let window_end = wf.window_start + WINDOW_SECS;

        // silence running past the window edge counts as a pause inside it
        let mut segments = self.closed_segments.clone();
        segments.extend(self.segments.open_segment());
        segments.push(VoicedSegment {
            start_time: window_end,
            end_time: window_end,
            frame_indices: 0..0,
        });
        segments.sort_by(|a, b| a.start_time.total_cmp(&b.start_time));
        let pauses = pause_stats(&segments, wf.window_start, WINDOW_SECS, self.features.timing.min_pause);

        let points: Vec<IntensityPoint> = wf
            .frames
            .iter()
            .map(|f| IntensityPoint {
                time: f.start_time,
                db: f.intensity_db,
                voiced: f.voiced,
            })
            .collect();
        let tempo = tempo(&points, WINDOW_SECS, layout.hop_secs(), &self.features.timing);

        let tracks = self.tracks(&wf.frames);
        let window = aggregate_window(&WindowEvidence {
            window_start: wf.window_start,
            window_len: WINDOW_SECS,
            frames: &wf.frames,
            tempo: tempo.as_ref(),
            pauses,
            tracks: &tracks,
        });
        let raw = raw_summaries(&wf.frames, wf.window_start);

        // keep the last segment before the next window so a pause spanning
        // the boundary is still seen
        let keep = self
            .closed_segments
            .iter()
            .rposition(|s| s.end_time <= window_end)
            .unwrap_or(0);
        self.closed_segments.drain(..keep);
        let next_first = layout.frames_starting_before(window_end);
        self.framer.trim(next_first * layout.hop);

        self.times.aggregate += t.elapsed();
        WindowProduct {
            index: wf.index,
            window,
            raw,
            times: std::mem::take(&mut self.times),
        }
    }

    /// Pulse tracks over each voiced run inside the window.
    fn tracks(&self, frames: &[FrameLld]) -> Vec<PeriodTrack> {
        let layout = self.framer.layout();
        let mut out = Vec::new();
        let mut i = 0;
        while i < frames.len() {
            if !frames[i].voiced {
                i += 1;
                continue;
            }
            let start = i;
            while i < frames.len() && frames[i].voiced && frames[i].frame_index == frames[start].frame_index + (i - start)
            {
                i += 1;
            }
            let run = &frames[start..i];
            let first = run[0].frame_index;
            let last = run[run.len() - 1].frame_index;
            let from = first * layout.hop;
            let to = last * layout.hop + layout.frame_len;
            if let Some(samples) = self.framer.span(from, to) {
                let f0: Vec<Option<f64>> = run.iter().map(|f| f.f0).collect();
                out.extend(track_pulses(samples, run[0].start_time, layout, &f0));
            }
        }
        out
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-second means of the frame descriptors (speech frames only for
/// pitch-related values).
fn raw_summaries(frames: &[FrameLld], window_start: f64) -> Vec<RawSummary> {
    let buckets = (WINDOW_SECS / RAW_SUMMARY_SECS).round() as usize;
    (0..buckets)
        .filter_map(|b| {
            let lo = window_start + b as f64 * RAW_SUMMARY_SECS;
            let hi = lo + RAW_SUMMARY_SECS;
            let fs: Vec<&FrameLld> = frames
                .iter()
                .filter(|f| f.start_time >= lo - 1e-9 && f.start_time < hi - 1e-9)
                .collect();
            if fs.is_empty() {
                return None;
            }
            let voiced = || fs.iter().filter(|f| f.voiced && f.quality_ok);
            let metrics = BTreeMap::from([
                ("f0".to_string(), mean(voiced().filter_map(|f| f.f0))),
                ("intensity".to_string(), mean(fs.iter().map(|f| f.intensity_db))),
                ("hnr".to_string(), mean(voiced().filter_map(|f| f.hnr_db))),
                ("spectral_flux".to_string(), mean(fs.iter().map(|f| f.spectral_flux))),
                (
                    "voiced_fraction".to_string(),
                    Some(fs.iter().filter(|f| f.voiced).count() as f64 / fs.len() as f64),
                ),
            ]);
            Some(RawSummary { start: lo, metrics })
        })
        .collect()
}
