use anyhow::Context;
use clap::Args;
use oxymap_core::io as file_io;
use oxymap_core::photon::ReflectanceLut;
use oxymap_core::sfdi::{sfdi_optical_properties, PhaseTriplet, ReferenceBundle};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Args)]
pub struct SfdiArgs {
    #[arg(long)]
    pub dc0: PathBuf,
    #[arg(long)]
    pub dc1: PathBuf,
    #[arg(long)]
    pub dc2: PathBuf,
    #[arg(long)]
    pub ac0: PathBuf,
    #[arg(long)]
    pub ac1: PathBuf,
    #[arg(long)]
    pub ac2: PathBuf,
    /// Reference bundle with a record at the measurement wavelength.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub lut: PathBuf,
    #[arg(long, default_value_t = 659.0)]
    pub wavelength: f64,
    /// Output optical-property map (2 channels: mua, musp).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    out: String,
    wavelength_nm: f64,
    pixels: usize,
    inverted: usize,
    out_of_gamut: usize,
    invalid_input: usize,
}

pub fn run(args: SfdiArgs) -> anyhow::Result<()> {
    crate::check_inputs(
        "sfdi",
        &[
            &args.dc0,
            &args.dc1,
            &args.dc2,
            &args.ac0,
            &args.ac1,
            &args.ac2,
            &args.reference,
            &args.lut,
        ],
    )?;
    let lut = ReflectanceLut::load(&args.lut).context("sfdi: load LUT")?;
    let refs = ReferenceBundle::load(&args.reference).context("sfdi: load reference")?;
    let reference = refs
        .for_wavelength(args.wavelength)
        .context("sfdi: reference wavelength")?;

    let load = |p: &PathBuf| -> anyhow::Result<oxymap_core::ImagePlane> {
        Ok(file_io::read_plane(p)
            .with_context(|| format!("sfdi: read {}", p.display()))?
            .0)
    };
    let triplet_dc = PhaseTriplet::new(
        load(&args.dc0)?,
        load(&args.dc1)?,
        load(&args.dc2)?,
        lut.fx_dc(),
        args.wavelength,
    )
    .context("sfdi: DC triplet")?;
    let triplet_ac = PhaseTriplet::new(
        load(&args.ac0)?,
        load(&args.ac1)?,
        load(&args.ac2)?,
        lut.fx_ac(),
        args.wavelength,
    )
    .context("sfdi: AC triplet")?;

    let (map, stats) =
        sfdi_optical_properties(&triplet_dc, &triplet_ac, reference, &lut).context("sfdi")?;
    file_io::write_planes(&args.out, &[map.mua(), map.musp()], "optical_properties")
        .context("sfdi: write output")?;

    super::emit_summary(&Summary {
        command: "sfdi",
        out: args.out.display().to_string(),
        wavelength_nm: args.wavelength,
        pixels: stats.total,
        inverted: stats.inverted,
        out_of_gamut: stats.out_of_gamut,
        invalid_input: stats.invalid_input,
    })
}
