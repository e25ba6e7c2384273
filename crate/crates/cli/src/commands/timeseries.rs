use anyhow::Context;
use clap::Args;
use oxymap_core::chromophore::ChromophoreBasis;
use oxymap_core::infer::load_weights;
use oxymap_core::photon::ReflectanceLut;
use oxymap_core::sfdi::ReferenceBundle;
use oxymap_core::timeseries::{
    read_checkpoint_manifest, read_frame_manifest, roi_timeseries_with_pairing, to_csv, to_svg,
    PairingMode, RoiRect, TimeSeriesContext, TimeSeriesMethod,
};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Args)]
pub struct TimeseriesArgs {
    /// JSON-lines frame manifest; frame paths are relative to it.
    #[arg(long)]
    pub frames: PathBuf,
    /// Region of interest as ROW,COL,WIDTH,HEIGHT.
    #[arg(long)]
    pub roi: String,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub lut: PathBuf,
    #[arg(long)]
    pub basis: PathBuf,
    /// Weight container (required for the neural method).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Optional JSON-lines checkpoint manifest to overlay.
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    #[arg(long = "out-csv")]
    pub out_csv: PathBuf,
    #[arg(long = "out-svg")]
    pub out_svg: PathBuf,
    #[arg(long = "lp", default_value_t = 0.5)]
    pub lowpass_cutoff: f64,
    #[arg(long = "hpw", default_value_t = 0.5)]
    pub highpass_halfwidth: f64,
    /// Frame pairing strategy.
    #[arg(long, value_enum, default_value_t = PairingArg::Adjacent)]
    pub pairing: PairingArg,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum MethodArg {
    Ssop,
    Oxygan,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum PairingArg {
    /// Strictly alternating frames, chunked two at a time.
    Adjacent,
    /// Pair each frame with the nearest preceding other-wavelength frame.
    NearestPreceding,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    method: &'a str,
    samples: usize,
    checkpoints: usize,
    warnings: &'a [String],
    out_csv: String,
    out_svg: String,
}

fn parse_roi(spec: &str) -> anyhow::Result<RoiRect> {
    let parts: Vec<usize> = spec
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("timeseries: bad --roi {spec:?} (want ROW,COL,W,H)"))?;
    if parts.len() != 4 {
        anyhow::bail!("timeseries: --roi wants four integers, got {spec:?}");
    }
    Ok(RoiRect {
        row: parts[0],
        col: parts[1],
        width: parts[2],
        height: parts[3],
    })
}

pub fn run(args: TimeseriesArgs) -> anyhow::Result<()> {
    crate::check_inputs(
        "timeseries",
        &[&args.frames, &args.reference, &args.lut, &args.basis],
    )?;
    let frames = read_frame_manifest(&args.frames).context("timeseries: frame manifest")?;
    let base_dir = args
        .frames
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let roi = parse_roi(&args.roi)?;
    let refs = ReferenceBundle::load(&args.reference).context("timeseries: reference")?;
    let lut = ReflectanceLut::load(&args.lut).context("timeseries: LUT")?;
    let basis = ChromophoreBasis::load(&args.basis).context("timeseries: basis")?;
    let weights = match (&args.weights, args.method) {
        (Some(path), _) => {
            crate::check_inputs("timeseries", &[path])?;
            Some(load_weights(path).context("timeseries: weights")?)
        }
        (None, MethodArg::Oxygan) => {
            anyhow::bail!("timeseries: the neural method needs --weights")
        }
        (None, MethodArg::Ssop) => None,
    };
    let checkpoints = match &args.checkpoints {
        Some(path) => {
            crate::check_inputs("timeseries", &[path])?;
            read_checkpoint_manifest(path).context("timeseries: checkpoint manifest")?
        }
        None => Vec::new(),
    };

    let method = match args.method {
        MethodArg::Ssop => TimeSeriesMethod::Ssop,
        MethodArg::Oxygan => TimeSeriesMethod::Oxygan,
    };
    let pairing = match args.pairing {
        PairingArg::Adjacent => PairingMode::Adjacent,
        PairingArg::NearestPreceding => PairingMode::NearestPreceding,
    };
    let ctx = TimeSeriesContext {
        refs: &refs,
        lut: &lut,
        basis: &basis,
        weights: weights.as_ref(),
        lowpass_cutoff: args.lowpass_cutoff,
        highpass_halfwidth: args.highpass_halfwidth,
    };
    let series = roi_timeseries_with_pairing(
        &frames,
        &base_dir,
        &roi,
        method,
        &ctx,
        &checkpoints,
        pairing,
    )
    .context("timeseries")?;
    for w in &series.warnings {
        eprintln!("timeseries: warning: {w}");
    }
    std::fs::write(&args.out_csv, to_csv(&series)).context("timeseries: write CSV")?;
    std::fs::write(
        &args.out_svg,
        to_svg(&series, &format!("ROI saturation trend ({})", method.label())),
    )
    .context("timeseries: write SVG")?;

    super::emit_summary(&Summary {
        command: "timeseries",
        method: method.label(),
        samples: series.points.len(),
        checkpoints: series.checkpoints.len(),
        warnings: &series.warnings,
        out_csv: args.out_csv.display().to_string(),
        out_svg: args.out_svg.display().to_string(),
    })
}
