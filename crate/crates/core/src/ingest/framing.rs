use super::SampleBuffer;

/// Absolute amplitude treated as a clipped sample (one PCM16 step below full scale).
pub const CLIP_LEVEL: f64 = 32767.0 / 32768.0;
/// Frames with a larger fraction of clipped samples are flagged low quality.
pub const MAX_CLIP_RATIO: f64 = 0.01;

/// Frame length and hop in samples for a given rate (25 ms / 10 ms).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
}

impl FrameLayout {
    pub fn for_rate(sample_rate: u32) -> Self {
        let sr = sample_rate as usize;
        Self {
            sample_rate,
            frame_len: (sr * 25 + 500) / 1000,
            hop: (sr * 10 + 500) / 1000,
        }
    }

    /// Number of complete frames in `n` samples.
    pub fn frame_count(&self, n: usize) -> usize {
        if n < self.frame_len {
            0
        } else {
            (n - self.frame_len) / self.hop + 1
        }
    }

    pub fn frame_start(&self, index: usize) -> f64 {
        (index * self.hop) as f64 / self.sample_rate as f64
    }

    pub fn hop_secs(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    pub fn frame_secs(&self) -> f64 {
        self.frame_len as f64 / self.sample_rate as f64
    }

    /// Number of frames whose start time lies before `t` seconds.
    pub fn frames_starting_before(&self, t: f64) -> usize {
        let hop_samples = t * self.sample_rate as f64 / self.hop as f64;
        let n = hop_samples.ceil();
        if n <= 0.0 {
            0
        } else {
            n as usize
        }
    }
}

/// One analysis frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    /// Seconds from stream origin.
    pub start_time: f64,
    pub samples: Vec<f64>,
    pub voiced: bool,
    pub quality_ok: bool,
}

impl Frame {
    pub fn new(index: usize, start_time: f64, samples: Vec<f64>) -> Self {
        let clipped = samples.iter().filter(|s| s.abs() >= CLIP_LEVEL).count();
        let quality_ok = (clipped as f64) <= MAX_CLIP_RATIO * samples.len() as f64;
        Self {
            index,
            start_time,
            samples,
            voiced: false,
            quality_ok,
        }
    }
}

/// Split a buffer into overlapping 25 ms frames with a 10 ms hop.
///
/// Trailing samples that do not fill a whole frame are dropped; a buffer
/// shorter than one frame yields an empty sequence.
pub fn frame_signal(buf: &SampleBuffer) -> Vec<Frame> {
    let layout = FrameLayout::for_rate(buf.sample_rate);
    (0..layout.frame_count(buf.samples.len()))
        .map(|i| {
            let start = i * layout.hop;
            Frame::new(
                i,
                layout.frame_start(i),
                buf.samples[start..start + layout.frame_len].to_vec(),
            )
        })
        .collect()
}
