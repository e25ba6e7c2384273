use anyhow::Context;
use clap::Args;
use oxymap_core::chromophore::ChromophoreBasis;
use oxymap_core::io as file_io;
use oxymap_core::photon::ReflectanceLut;
use oxymap_core::sfdi::ReferenceBundle;
use oxymap_core::ssop::ssop_sto2;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Args)]
pub struct SsopArgs {
    #[arg(long)]
    pub img659: PathBuf,
    #[arg(long)]
    pub img851: PathBuf,
    /// Reference bundle holding both wavelengths.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub lut: PathBuf,
    #[arg(long)]
    pub basis: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Low-pass cutoff as a fraction of the carrier.
    #[arg(long = "lp", default_value_t = 0.5)]
    pub lowpass_cutoff: f64,
    /// Band-window half-width as a fraction of the carrier.
    #[arg(long = "hpw", default_value_t = 0.5)]
    pub highpass_halfwidth: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    out: String,
    pixels: usize,
    out_of_gamut_659: usize,
    out_of_gamut_851: usize,
    low_confidence_border: usize,
}

pub fn run(args: SsopArgs) -> anyhow::Result<()> {
    crate::check_inputs(
        "ssop",
        &[&args.img659, &args.img851, &args.reference, &args.lut, &args.basis],
    )?;
    let img659 = file_io::read_plane(&args.img659).context("ssop: read 659")?.0;
    let img851 = file_io::read_plane(&args.img851).context("ssop: read 851")?.0;
    let refs = ReferenceBundle::load(&args.reference).context("ssop: load reference")?;
    let lut = ReflectanceLut::load(&args.lut).context("ssop: load LUT")?;
    let basis = ChromophoreBasis::load(&args.basis).context("ssop: load basis")?;

    let run = ssop_sto2(
        &img659,
        &img851,
        &refs,
        &lut,
        &basis,
        args.lowpass_cutoff,
        args.highpass_halfwidth,
    )
    .context("ssop")?;
    file_io::write_plane(&args.out, run.sto2.plane(), "sto2").context("ssop: write output")?;

    super::emit_summary(&Summary {
        command: "ssop",
        out: args.out.display().to_string(),
        pixels: run.gamut_659.total,
        out_of_gamut_659: run.gamut_659.out_of_gamut,
        out_of_gamut_851: run.gamut_851.out_of_gamut,
        low_confidence_border: run.low_confidence_border,
    })
}
