use std::path::Path;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::linkage::LinkageEngine;
use crate::store::Store;

use super::run::run_batch;
use super::sink::StageTiming;
use super::{PipelineError, RuntimeConfig};

/// First window index counted as steady state.
pub const STEADY_STATE_WINDOW: usize = 5;
/// Shortest input accepted by the benchmark, seconds.
pub const MIN_BENCH_SECS: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTiming {
    pub window_index: usize,
    /// Median over runs.
    pub wall_time: f64,
    pub rtf: f64,
    pub stage_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: usize,
    pub audio_secs: f64,
    pub windows: Vec<WindowTiming>,
    /// Median total rtf over steady-state windows.
    pub steady_state_rtf: f64,
    /// Pre-steady windows slower than real time.
    pub warmup_excess: Vec<usize>,
    /// Largest relative gap between the stage sum and the measured total.
    pub accounting_error: f64,
    pub stages: Vec<StageTiming>,
}

impl BenchReport {
    pub fn real_time(&self) -> bool {
        self.steady_state_rtf < 1.0
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Run the full pipeline `runs` times over the same input, each into a fresh
/// store under `scratch`, and summarize per-window timings.
pub fn benchmark(
    samples: &[f64],
    cfg: &RuntimeConfig,
    runs: usize,
    scratch: &Path,
) -> Result<BenchReport, PipelineError> {
    let audio_secs = samples.len() as f64 / crate::ingest::CANONICAL_RATE as f64;
    if audio_secs < MIN_BENCH_SECS {
        return Err(PipelineError::Config(format!(
            "benchmark needs at least {MIN_BENCH_SECS} s of audio, got {audio_secs:.1} s"
        )));
    }
    let runs = runs.max(1);
    let mut per_run = Vec::with_capacity(runs);
    for k in 0..runs {
        let dir = scratch.join(format!("run_{k}"));
        let store = Arc::new(Store::open(&dir)?);
        let engine = Arc::new(Mutex::new(LinkageEngine::new(cfg.mapping.clone())));
        per_run.push(run_batch(samples, cfg, store, engine)?.reports);
    }

    let count = per_run.iter().map(Vec::len).min().unwrap_or(0);
    let windows: Vec<WindowTiming> = (0..count)
        .map(|i| {
            let wall = median(per_run.iter().map(|r| r[i].wall_time).collect());
            WindowTiming {
                window_index: per_run[0][i].window_index,
                wall_time: wall,
                rtf: wall / per_run[0][i].stages[0].audio_time,
                stage_sum: median(per_run.iter().map(|r| r[i].stage_sum()).collect()),
            }
        })
        .collect();
    let steady: Vec<f64> = windows
        .iter()
        .filter(|w| w.window_index >= STEADY_STATE_WINDOW)
        .map(|w| w.rtf)
        .collect();
    let warmup_excess = windows
        .iter()
        .filter(|w| w.window_index < STEADY_STATE_WINDOW && w.rtf > 1.0)
        .map(|w| w.window_index)
        .collect();
    let accounting_error = windows
        .iter()
        .map(|w| (w.wall_time - w.stage_sum).abs() / w.wall_time)
        .fold(0.0, f64::max);
    Ok(BenchReport {
        runs,
        audio_secs,
        steady_state_rtf: median(steady),
        warmup_excess,
        accounting_error,
        windows,
        stages: per_run.into_iter().flatten().flat_map(|r| r.stages).collect(),
    })
}
