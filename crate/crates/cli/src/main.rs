use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hearlink::commands;
use hearlink_core::par::Parallelism;

#[derive(Parser)]
#[command(name = "hearlink", version, about = "Streaming speech descriptors and indicator linkage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process a WAV file, or length-prefixed PCM16 chunks on stdin ("-").
    Run {
        #[arg(long)]
        input: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also serve the HTTP API on this port while and after processing.
        #[arg(long)]
        serve: Option<u16>,
    },
    /// Recompute indicator trajectories from stored contextual metrics.
    Analyze {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Time the full pipeline over a WAV file.
    Bench {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a synthetic speech-like WAV from a profile document.
    Synth {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the association protocol over a subject manifest.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Protocol settings (alpha, thresholds, hypotheses) as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Serve the HTTP API over an existing data directory.
    Serve {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            input,
            config,
            data,
            serve,
        } => {
            let data = commands::resolve_data(data)?;
            let summary = commands::run(&input, config.as_deref(), &data, serve)?;
            println!("{}", commands::summary_json(&summary));
        }
        Command::Analyze { data } => {
            let data = commands::resolve_data(data)?;
            let report = commands::analyze(&data)?;
            if report.corrupt_lines > 0 {
                log::warn!("skipped {} unreadable stored lines", report.corrupt_lines);
            }
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Bench {
            input,
            runs,
            config,
            out,
        } => {
            let report = commands::bench(&input, config.as_deref(), runs)?;
            if let Some(out) = out {
                std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
            }
            for w in &report.windows {
                println!("window {:>3}  rtf {:.4}", w.window_index, w.rtf);
            }
            if !report.warmup_excess.is_empty() {
                println!("warmup windows slower than real time: {:?}", report.warmup_excess);
            }
            println!(
                "steady-state rtf {:.4} over {} runs (stage accounting gap {:.1}%)",
                report.steady_state_rtf,
                report.runs,
                100.0 * report.accounting_error
            );
            if !report.real_time() {
                eprintln!("steady state is slower than real time");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Synth { profile, seed, out } => {
            let spec = commands::synth(&profile, seed, &out)?;
            println!("wrote {} ({:.1} s)", out.display(), spec.duration());
        }
        Command::Stats {
            manifest,
            out,
            config,
            sequential,
        } => {
            let mode = if sequential {
                Parallelism::Sequential
            } else {
                Parallelism::Parallel
            };
            let significant = commands::stats(&manifest, &out, config.as_deref(), mode)?;
            println!("{significant} significant associations; exports in {}", out.display());
        }
        Command::Serve { data, port } => {
            let data = commands::resolve_data(data)?;
            commands::serve(&data, port)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
