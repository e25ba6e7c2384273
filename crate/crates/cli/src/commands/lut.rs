use anyhow::Context;
use clap::Args;
use oxymap_core::photon::{
    build_lut, DiffusionModel, DEFAULT_FX_AC, DEFAULT_GRID_SIZE, DEFAULT_MUA_RANGE,
    DEFAULT_MUSP_RANGE, DEFAULT_REFRACTIVE_INDEX,
};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Args)]
pub struct LutBuildArgs {
    /// AC spatial frequency, mm^-1.
    #[arg(long = "fx-ac", default_value_t = DEFAULT_FX_AC)]
    pub fx_ac: f64,
    /// Tissue refractive index.
    #[arg(long = "n", default_value_t = DEFAULT_REFRACTIVE_INDEX)]
    pub n: f64,
    #[arg(long, default_value_t = DEFAULT_MUA_RANGE.0)]
    pub mua_min: f64,
    #[arg(long, default_value_t = DEFAULT_MUA_RANGE.1)]
    pub mua_max: f64,
    #[arg(long, default_value_t = DEFAULT_MUSP_RANGE.0)]
    pub musp_min: f64,
    #[arg(long, default_value_t = DEFAULT_MUSP_RANGE.1)]
    pub musp_max: f64,
    /// Grid nodes per axis.
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    out: String,
    fx_dc: f64,
    fx_ac: f64,
    refractive_index: f64,
    grid: (usize, usize),
    model_id: String,
}

pub fn run(args: LutBuildArgs) -> anyhow::Result<()> {
    let model = DiffusionModel::new(args.n).context("lut build: forward model")?;
    let lut = build_lut(
        &model,
        (args.mua_min, args.mua_max),
        (args.musp_min, args.musp_max),
        (args.grid, args.grid),
        0.0,
        args.fx_ac,
    )
    .context("lut build")?;
    lut.save(&args.out).context("lut build: write table")?;
    super::emit_summary(&Summary {
        command: "lut build",
        out: args.out.display().to_string(),
        fx_dc: lut.fx_dc(),
        fx_ac: lut.fx_ac(),
        refractive_index: lut.refractive_index(),
        grid: (lut.mua_grid().len(), lut.musp_grid().len()),
        model_id: lut.model_id().to_string(),
    })
}
