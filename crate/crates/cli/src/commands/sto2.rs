use anyhow::Context;
use clap::Args;
use oxymap_core::chromophore::{sto2_from_mua, ChromophoreBasis};
use oxymap_core::io as file_io;
use oxymap_core::photon::OpticalPropertyMap;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Args)]
pub struct Sto2Args {
    /// Absorption maps as `WAVELENGTH:PATH` (repeat per wavelength);
    /// PATH may be a 2-channel optical-property file or a 1-channel
    /// absorption plane.
    #[arg(long = "mua", required = true)]
    pub mua: Vec<String>,
    #[arg(long)]
    pub basis: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    out: String,
    wavelengths_nm: Vec<f64>,
    valid_pixels: usize,
    pixels: usize,
}

fn parse_spec(spec: &str) -> anyhow::Result<(f64, PathBuf)> {
    let (wl, path) = spec
        .split_once(':')
        .ok_or_else(|| anyhow::anyhow!("sto2: --mua expects WAVELENGTH:PATH, got {spec:?}"))?;
    let wl: f64 = wl
        .parse()
        .with_context(|| format!("sto2: bad wavelength in {spec:?}"))?;
    Ok((wl, PathBuf::from(path)))
}

pub fn run(args: Sto2Args) -> anyhow::Result<()> {
    let mut maps = Vec::new();
    let mut wavelengths = Vec::new();
    for spec in &args.mua {
        let (wavelength, path) = parse_spec(spec)?;
        crate::check_inputs("sto2", &[&path])?;
        let (planes, sc) = file_io::read_planes(&path)
            .with_context(|| format!("sto2: read {}", path.display()))?;
        let map = match planes.len() {
            // A bare absorption plane: adopt unit scattering (unused by
            // the Beer-Lambert fit), invalid where the absorption is.
            1 => {
                let mua = planes.into_iter().next().unwrap();
                let musp_data: Vec<f64> = mua
                    .data()
                    .iter()
                    .map(|v| if v.is_finite() { 1.0 } else { f64::NAN })
                    .collect();
                let musp = oxymap_core::ImagePlane::with_invalid(
                    sc.width,
                    sc.height,
                    sc.pitch_mm,
                    musp_data,
                )?;
                OpticalPropertyMap::new(mua, musp, wavelength)?
            }
            2 => {
                let mut it = planes.into_iter();
                let mua = it.next().unwrap();
                let musp = it.next().unwrap();
                OpticalPropertyMap::new(mua, musp, wavelength)?
            }
            n => anyhow::bail!(
                "sto2: {} has {n} channels; expected 1 (mua) or 2 (mua, musp)",
                path.display()
            ),
        };
        wavelengths.push(wavelength);
        maps.push(map);
    }

    let basis = ChromophoreBasis::load(&args.basis).context("sto2: load basis")?;
    let basis = basis
        .subset(&wavelengths)
        .context("sto2: basis wavelengths")?;
    let refs: Vec<&OpticalPropertyMap> = maps.iter().collect();
    let map = sto2_from_mua(&refs, &basis).context("sto2")?;
    file_io::write_plane(&args.out, map.plane(), "sto2").context("sto2: write output")?;

    super::emit_summary(&Summary {
        command: "sto2",
        out: args.out.display().to_string(),
        wavelengths_nm: wavelengths,
        valid_pixels: map.plane().valid_count(),
        pixels: map.plane().data().len(),
    })
}
