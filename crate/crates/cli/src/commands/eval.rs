use anyhow::Context;
use clap::Args;
use oxymap_core::io as file_io;
use oxymap_core::raster::{nmae, Mask, StO2Map};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Args)]
pub struct EvalArgs {
    /// Predicted saturation map.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth saturation map.
    #[arg(long)]
    pub gt: PathBuf,
    /// Inclusion mask; defaults to all pixels.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Label carried into the summary (e.g. the method under test).
    #[arg(long, default_value = "prediction")]
    pub label: String,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    label: &'a str,
    nmae: f64,
    pixels_evaluated: usize,
}

pub fn run(args: EvalArgs) -> anyhow::Result<()> {
    crate::check_inputs("eval", &[&args.pred, &args.gt])?;
    let pred = file_io::read_plane(&args.pred).context("eval: read prediction")?.0;
    let gt = file_io::read_plane(&args.gt).context("eval: read ground truth")?.0;
    let mask = match &args.mask {
        Some(path) => {
            crate::check_inputs("eval", &[path])?;
            file_io::read_mask(path).context("eval: read mask")?.0
        }
        None => Mask::all_true(pred.width(), pred.height()),
    };
    let evaluated = pred
        .data()
        .iter()
        .zip(gt.data())
        .zip(mask.bits())
        .filter(|((p, g), m)| **m && p.is_finite() && g.is_finite())
        .count();
    let pred = StO2Map::new(pred).context("eval: prediction range")?;
    let gt = StO2Map::new(gt).context("eval: ground-truth range")?;
    let value = nmae(&pred, &gt, &mask).context("eval")?;
    super::emit_summary(&Summary {
        command: "eval",
        label: &args.label,
        nmae: value,
        pixels_evaluated: evaluated,
    })
}
