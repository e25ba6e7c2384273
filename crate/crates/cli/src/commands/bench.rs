use anyhow::Context;
use clap::Args;
use oxymap_core::infer::{benchmark_inference, load_weights, BenchReport};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Square input edge length (must suit the manifest's depth).
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    /// Worker threads for the multi-threaded measurement.
    #[arg(long, default_value_t = 4)]
    pub threads: usize,
    #[arg(long, default_value_t = 3)]
    pub runs: usize,
    /// Optional path for the JSON report (also printed to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    single: &'a BenchReport,
    threaded: &'a BenchReport,
    speedup: f64,
}

pub fn run(args: BenchArgs) -> anyhow::Result<()> {
    crate::check_inputs("bench", &[&args.weights])?;
    let weights = load_weights(&args.weights).context("bench: load weights")?;
    let single =
        benchmark_inference(&weights, args.size, 1, args.runs).context("bench: 1 thread")?;
    let threaded = benchmark_inference(&weights, args.size, args.threads, args.runs)
        .with_context(|| format!("bench: {} threads", args.threads))?;
    let summary = Summary {
        command: "bench",
        single: &single,
        threaded: &threaded,
        speedup: single.min_seconds / threaded.min_seconds,
    };
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&summary)?)
            .context("bench: write report")?;
    }
    super::emit_summary(&summary)
}
