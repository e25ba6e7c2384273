use anyhow::Context;
use clap::Args;
use oxymap_core::infer::{forward_generator, load_weights};
use oxymap_core::io as file_io;
use oxymap_core::phantom::InputTensor;
use serde::Serialize;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Args)]
pub struct InferArgs {
    /// OXW weight container.
    #[arg(long)]
    pub weights: PathBuf,
    /// 3-channel encoded input tensor.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    out: String,
    width: usize,
    height: usize,
    seconds: f64,
}

pub fn run(args: InferArgs) -> anyhow::Result<()> {
    crate::check_inputs("infer", &[&args.weights, &args.input])?;
    let weights = load_weights(&args.weights).context("infer: load weights")?;
    let input = InputTensor::load(&args.input).context("infer: load input tensor")?;
    let start = Instant::now();
    let map = forward_generator(&input, &weights).context("infer")?;
    let seconds = start.elapsed().as_secs_f64();
    file_io::write_plane(&args.out, map.plane(), "sto2").context("infer: write output")?;
    let (w, h) = input.dims();
    super::emit_summary(&Summary {
        command: "infer",
        out: args.out.display().to_string(),
        width: w,
        height: h,
        seconds,
    })
}
