//! Audio ingestion: decoding, bridge normalization, framing and voice gating.

mod decode;
mod framing;
mod stream;
mod vad;

pub use decode::{decode_pcm, resample_linear, FormatHint};
pub use framing::{frame_signal, Frame, FrameLayout, CLIP_LEVEL, MAX_CLIP_RATIO};
pub use stream::{read_chunk, write_chunk, ChunkReader};
pub use vad::{
    segments_from_flags, vad_gate, EnergyVad, HangoverGate, SegmentBuilder, VadConfig,
    VoiceDetector, VoicedSegment, DEFAULT_HANGOVER_FRAMES,
};

use thiserror::Error;

/// Canonical sample rate after bridge normalization.
pub const CANONICAL_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed audio: {0}")]
    Decode(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("i/o error while reading audio: {0}")]
    Io(#[from] std::io::Error),
}

/// Mono, normalized amplitude samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channel_count: u16,
    /// Seconds of the first sample relative to the stream origin.
    pub origin_time: f64,
}

impl SampleBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            channel_count: 1,
            origin_time: 0.0,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
