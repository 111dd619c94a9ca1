use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use hearlink_core::linkage::LinkageEngine;
use hearlink_core::par::Parallelism;
use hearlink_core::runtime::{
    benchmark, load_input, rebuild_engine, run_analysis, run_stream, AnalysisReport, BenchReport, InputSource,
    RunSummary, RuntimeConfig,
};
use hearlink_core::stats::{run_protocol, write_exports, Manifest, ProtocolConfig};
use hearlink_core::store::Store;
use hearlink_core::synth::{synth_to_file, SynthSpec, SyntheticProfile};
use parking_lot::Mutex;
use serde::Deserialize;
use serde_json::json;

use crate::api::{self, AppState};

pub const DATA_ENV: &str = "HEARLINK_DATA";

/// The data directory: the environment variable wins over the flag.
pub fn resolve_data(flag: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    match std::env::var_os(DATA_ENV).filter(|v| !v.is_empty()) {
        Some(v) => Ok(PathBuf::from(v)),
        None => flag.with_context(|| format!("no data directory: pass --data or set {DATA_ENV}")),
    }
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<RuntimeConfig> {
    match path {
        Some(p) => RuntimeConfig::from_path(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RuntimeConfig::default()),
    }
}

/// API state for a data directory, with the engine rebuilt from storage.
pub fn app_state(data: &Path, cfg: &RuntimeConfig) -> anyhow::Result<AppState> {
    let store = Arc::new(Store::open(data).with_context(|| format!("opening {}", data.display()))?);
    let subject = cfg.pipeline.subject_id.clone();
    let engine = rebuild_engine(&store, &cfg.mapping, &subject)?;
    Ok(AppState {
        store,
        engine: Arc::new(Mutex::new(engine)),
        subject,
        timeline: cfg.timeline()?,
    })
}

pub fn run(input: &str, config: Option<&Path>, data: &Path, serve: Option<u16>) -> anyhow::Result<RunSummary> {
    let cfg = load_config(config)?;
    let store = Arc::new(Store::open(data).with_context(|| format!("opening {}", data.display()))?);
    let engine = Arc::new(Mutex::new(LinkageEngine::new(cfg.mapping.clone())));
    let source = if input == "-" {
        InputSource::Chunks(Box::new(std::io::stdin()))
    } else {
        InputSource::Samples(load_input(Path::new(input)).with_context(|| format!("reading {input}"))?)
    };

    let Some(port) = serve else {
        return Ok(run_stream(source, &cfg, store, engine)?);
    };
    let state = AppState {
        store: store.clone(),
        engine: engine.clone(),
        subject: cfg.pipeline.subject_id.clone(),
        timeline: cfg.timeline()?,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    let server = runtime.spawn(api::serve(state, port));
    let summary = run_stream(source, &cfg, store, engine)?;
    println!("{}", summary_json(&summary));
    log::info!("stream finished; still serving on port {port}");
    runtime.block_on(server)??;
    Ok(summary)
}

pub fn summary_json(s: &RunSummary) -> serde_json::Value {
    json!({
        "windows": s.windows,
        "warmup_windows": s.warmup_windows,
        "scored_windows": s.scored_windows,
        "audio_secs": s.audio_secs,
    })
}

pub fn analyze(data: &Path) -> anyhow::Result<AnalysisReport> {
    let cfg = RuntimeConfig::from_data_dir(data)?;
    let store = Store::open(data).with_context(|| format!("opening {}", data.display()))?;
    Ok(run_analysis(&store, &cfg.mapping, &cfg.pipeline.subject_id, cfg.timeline()?)?)
}

pub fn bench(input: &Path, config: Option<&Path>, runs: usize) -> anyhow::Result<BenchReport> {
    let cfg = load_config(config)?;
    let samples = load_input(input).with_context(|| format!("reading {}", input.display()))?;
    let scratch = tempfile::tempdir()?;
    Ok(benchmark(&samples, &cfg, runs, scratch.path())?)
}

/// Synthesis input: a full spec, a list of phases or a single phase.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ProfileDoc {
    Spec(SynthSpec),
    Phases(Vec<SyntheticProfile>),
    Single(SyntheticProfile),
}

pub fn parse_profile(doc: &str) -> anyhow::Result<SynthSpec> {
    let parsed: ProfileDoc = serde_json::from_str(doc).context("profile is not a synthesis spec")?;
    Ok(match parsed {
        ProfileDoc::Spec(s) => s,
        ProfileDoc::Phases(p) => SynthSpec::new(p),
        ProfileDoc::Single(p) => SynthSpec::new(vec![p]),
    })
}

pub fn synth(profile: &Path, seed: u64, out: &Path) -> anyhow::Result<SynthSpec> {
    let spec = parse_profile(&std::fs::read_to_string(profile).with_context(|| format!("reading {}", profile.display()))?)?;
    synth_to_file(&spec, seed, out)?;
    Ok(spec)
}

pub fn stats(manifest: &Path, out: &Path, config: Option<&Path>, mode: Parallelism) -> anyhow::Result<usize> {
    let protocol: ProtocolConfig = match config {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?)).with_context(|| format!("parsing {}", p.display()))?,
        None => ProtocolConfig::default(),
    };
    let manifest = Manifest::from_path(manifest)?;
    let report = run_protocol(&manifest, &protocol, mode)?;
    write_exports(&report, out)?;
    for s in &report.skipped {
        log::warn!("skipped: {s}");
    }
    Ok(report.results.iter().filter(|r| r.significant).count())
}

pub fn serve(data: &Path, port: u16) -> anyhow::Result<()> {
    if !data.is_dir() {
        bail!("data directory {} does not exist", data.display());
    }
    let cfg = RuntimeConfig::from_data_dir(data)?;
    let state = app_state(data, &cfg)?;
    tokio::runtime::Runtime::new()?.block_on(api::serve(state, port))
}
