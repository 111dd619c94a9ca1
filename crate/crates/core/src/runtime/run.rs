use std::io::Read;
use std::path::Path;
use std::sync::mpsc::sync_channel;
use std::sync::Arc;
use std::time::Instant;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::ingest::{decode_pcm, ChunkReader, FormatHint, CANONICAL_RATE};
use crate::linkage::{LinkageEngine, WindowStatus};
use crate::store::{Store, AGGREGATED_METRICS};

use super::producer::{WindowProduct, WindowProducer};
use super::sink::{LinkageSink, WindowReport};
use super::{PipelineError, RuntimeConfig, CONFIG_SNAPSHOT};

/// Where samples come from.
pub enum InputSource {
    /// Decoded mono samples at the canonical rate.
    Samples(Vec<f64>),
    /// Length-prefixed PCM16 chunks, e.g. stdin.
    Chunks(Box<dyn Read + Send>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub windows: usize,
    pub warmup_windows: usize,
    pub scored_windows: usize,
    pub audio_secs: f64,
    pub reports: Vec<WindowReport>,
}

impl RunSummary {
    fn push(&mut self, report: WindowReport) {
        self.windows += 1;
        match report.status {
            WindowStatus::Scored => self.scored_windows += 1,
            WindowStatus::Warmup { .. } => self.warmup_windows += 1,
        }
        self.reports.push(report);
    }
}

/// Decode a WAV file to mono samples at the canonical rate.
pub fn load_input(path: &Path) -> Result<Vec<f64>, PipelineError> {
    let bytes = std::fs::read(path)?;
    Ok(decode_pcm(&bytes, FormatHint::Wav)?.samples)
}

fn chunk_len(cfg: &RuntimeConfig) -> usize {
    ((cfg.pipeline.chunk_secs * CANONICAL_RATE as f64).round() as usize).max(1)
}

/// Process a decoded stream on the calling thread. Per-window wall time
/// covers everything since the previous window was persisted.
pub fn run_batch(
    samples: &[f64],
    cfg: &RuntimeConfig,
    store: Arc<Store>,
    engine: Arc<Mutex<LinkageEngine>>,
) -> Result<RunSummary, PipelineError> {
    let sink = open_sink(cfg, store, engine)?;
    let mut producer = producer_for(cfg);
    let mut summary = RunSummary {
        audio_secs: samples.len() as f64 / CANONICAL_RATE as f64,
        ..RunSummary::default()
    };
    let mut since = Instant::now();
    let mut consume = |products: Vec<WindowProduct>, summary: &mut RunSummary| -> Result<(), PipelineError> {
        for p in products {
            let mut report = sink.consume(p)?;
            report.wall_time = since.elapsed().as_secs_f64();
            since = Instant::now();
            summary.push(report);
        }
        Ok(())
    };
    for chunk in samples.chunks(chunk_len(cfg)) {
        let products = producer.push(chunk)?;
        consume(products, &mut summary)?;
    }
    let products = producer.finish()?;
    consume(products, &mut summary)?;
    Ok(summary)
}

/// Process a stream through bounded queues: reader, producer and sink each
/// on their own thread.
pub fn run_stream(
    source: InputSource,
    cfg: &RuntimeConfig,
    store: Arc<Store>,
    engine: Arc<Mutex<LinkageEngine>>,
) -> Result<RunSummary, PipelineError> {
    let sink = open_sink(cfg, store, engine)?;
    let mut producer = producer_for(cfg);
    let depth = cfg.pipeline.queue_depth;
    let chunk = chunk_len(cfg);
    let (chunk_tx, chunk_rx) = sync_channel::<Vec<f64>>(depth);
    let (product_tx, product_rx) = sync_channel::<WindowProduct>(depth);

    std::thread::scope(|scope| {
        let reader = scope.spawn(move || -> Result<f64, PipelineError> {
            let mut samples = 0usize;
            match source {
                InputSource::Samples(all) => {
                    for c in all.chunks(chunk) {
                        samples += c.len();
                        if chunk_tx.send(c.to_vec()).is_err() {
                            break;
                        }
                    }
                }
                InputSource::Chunks(r) => {
                    for c in ChunkReader::new(r) {
                        let c = c?;
                        samples += c.len();
                        if chunk_tx.send(c).is_err() {
                            break;
                        }
                    }
                }
            }
            Ok(samples as f64 / CANONICAL_RATE as f64)
        });

        let worker = scope.spawn(move || -> Result<(), PipelineError> {
            for c in chunk_rx {
                for p in producer.push(&c)? {
                    if product_tx.send(p).is_err() {
                        return Ok(());
                    }
                }
            }
            for p in producer.finish()? {
                if product_tx.send(p).is_err() {
                    break;
                }
            }
            Ok(())
        });

        let mut summary = RunSummary::default();
        let mut failure = None;
        for p in product_rx {
            match sink.consume(p) {
                Ok(r) => summary.push(r),
                Err(e) => {
                    failure = Some(e);
                    // dropping the receiver stops the upstream stages
                    break;
                }
            }
        }
        let produced = worker.join().expect("producer thread panicked");
        let read = reader.join().expect("reader thread panicked");
        if let Some(e) = failure {
            return Err(e);
        }
        produced?;
        summary.audio_secs = read?;
        Ok(summary)
    })
}

fn producer_for(cfg: &RuntimeConfig) -> WindowProducer {
    let p = &cfg.pipeline;
    WindowProducer::new(p.vad, p.features, p.parallelism)
}

fn open_sink(
    cfg: &RuntimeConfig,
    store: Arc<Store>,
    engine: Arc<Mutex<LinkageEngine>>,
) -> Result<LinkageSink, PipelineError> {
    cfg.validate()?;
    let subject = &cfg.pipeline.subject_id;
    if !store.query(AGGREGATED_METRICS, subject, None, None)?.is_empty() {
        return Err(PipelineError::Conflict(format!(
            "data directory already holds a stream for subject '{subject}'"
        )));
    }
    std::fs::write(store.dir().join(CONFIG_SNAPSHOT), cfg.to_json())?;
    store.ensure_files()?;
    LinkageSink::new(store, engine, subject, cfg.timeline()?)
}
