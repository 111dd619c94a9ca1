//! Pause and tempo statistics over voiced segments.

use serde::{Deserialize, Serialize};

use crate::ingest::VoicedSegment;

/// Tolerance for comparing accumulated frame times.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingConfig {
    /// Shortest inter-segment gap counted as a pause, seconds.
    pub min_pause: f64,
    /// Required intensity rise above the surrounding dips for a syllable nucleus.
    pub nucleus_prominence_db: f64,
    /// Minimum distance between nuclei, seconds.
    pub nucleus_min_spacing: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            min_pause: 0.3,
            nucleus_prominence_db: 2.0,
            nucleus_min_spacing: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauseStats {
    /// Mean pause length; 0 when the window has no pause.
    pub mean_duration: f64,
    pub frequency_per_min: f64,
    pub count: usize,
}

/// Pauses are gaps between consecutive segments, clipped to the window,
/// that last at least `min_pause`. Returns `None` when no segment overlaps
/// the window.
pub fn pause_stats(
    segments: &[VoicedSegment],
    window_start: f64,
    window_len: f64,
    min_pause: f64,
) -> Option<PauseStats> {
    let window_end = window_start + window_len;
    let overlaps = segments
        .iter()
        .any(|s| s.end_time > window_start && s.start_time < window_end);
    if !overlaps || window_len <= 0.0 {
        return None;
    }
    let pauses: Vec<f64> = segments
        .windows(2)
        .filter_map(|w| {
            let start = w[0].end_time.max(window_start);
            let end = w[1].start_time.min(window_end);
            let len = end - start;
            (len + TIME_EPS >= min_pause).then_some(len)
        })
        .collect();
    let count = pauses.len();
    Some(PauseStats {
        mean_duration: if count == 0 {
            0.0
        } else {
            pauses.iter().sum::<f64>() / count as f64
        },
        frequency_per_min: count as f64 * 60.0 / window_len,
        count,
    })
}

/// One frame's intensity sample for tempo analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityPoint {
    pub time: f64,
    pub db: f64,
    pub voiced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTempo {
    /// Nuclei per second of total window time, pauses included.
    pub speech_rate: f64,
    /// Nuclei per second of voiced time.
    pub articulation_rate: f64,
    pub nuclei: usize,
    pub voiced_time: f64,
}

/// Syllable-nucleus tempo over a window of intensity samples.
///
/// Nuclei are intensity maxima inside voiced runs that rise at least
/// `nucleus_prominence_db` above the lowest point on each side before a
/// higher sample (or the run edge), thinned to `nucleus_min_spacing` by
/// keeping the louder peak. `hop` is the time each sample represents.
pub fn tempo(
    track: &[IntensityPoint],
    window_len: f64,
    hop: f64,
    cfg: &TimingConfig,
) -> Option<SegmentTempo> {
    let voiced_frames = track.iter().filter(|p| p.voiced).count();
    if voiced_frames == 0 || window_len <= 0.0 {
        return None;
    }
    let voiced_time = voiced_frames as f64 * hop;

    let mut candidates = Vec::new();
    let mut i = 0;
    while i < track.len() {
        if !track[i].voiced {
            i += 1;
            continue;
        }
        let start = i;
        while i < track.len() && track[i].voiced {
            i += 1;
        }
        candidates.extend(prominent_peaks(&track[start..i], cfg.nucleus_prominence_db));
    }

    // louder first; ties broken by time for determinism
    candidates.sort_by(|a: &IntensityPoint, b| b.db.total_cmp(&a.db).then(a.time.total_cmp(&b.time)));
    let mut kept: Vec<f64> = Vec::new();
    for c in candidates {
        if kept
            .iter()
            .all(|t| (t - c.time).abs() + TIME_EPS >= cfg.nucleus_min_spacing)
        {
            kept.push(c.time);
        }
    }

    let nuclei = kept.len();
    Some(SegmentTempo {
        speech_rate: nuclei as f64 / window_len,
        articulation_rate: nuclei as f64 / voiced_time,
        nuclei,
        voiced_time,
    })
}

fn prominent_peaks(run: &[IntensityPoint], min_prominence: f64) -> Vec<IntensityPoint> {
    let n = run.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let h = run[i].db;
        if !(h > run[i - 1].db && h >= run[i + 1].db) {
            continue;
        }
        let mut left_min = h;
        for p in run[..i].iter().rev() {
            if p.db > h {
                break;
            }
            left_min = left_min.min(p.db);
        }
        let mut right_min = h;
        for p in &run[i + 1..] {
            if p.db > h {
                break;
            }
            right_min = right_min.min(p.db);
        }
        if h - left_min.max(right_min) >= min_prominence {
            out.push(run[i]);
        }
    }
    out
}
