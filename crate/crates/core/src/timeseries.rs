//! Region-of-interest saturation trends over a time-ordered frame
//! sequence that alternates between the two illumination wavelengths.
//!
//! Adjacent frames pair into one sample (nearest-preceding partner); each
//! pair runs through the selected estimator and the mean and standard
//! deviation over the region are recorded. Sparse conventional-pipeline
//! checkpoints can be overlaid for comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use crate::chromophore::ChromophoreBasis;
use crate::error::{Error, Result};
use crate::infer::{forward_generator, GeneratorWeights};
use crate::io as file_io;
use crate::phantom::build_input_tensor;
use crate::photon::ReflectanceLut;
use crate::raster::StO2Map;
use crate::sfdi::ReferenceBundle;
use crate::ssop::ssop_sto2;

/// One line of a frame manifest (JSON lines on disk).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrameRecord {
    pub t_seconds: f64,
    pub wavelength_nm: f64,
    pub path: String,
}

/// One line of a checkpoint manifest: a precomputed saturation map at a
/// known time.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointRecord {
    pub t_seconds: f64,
    pub path: String,
}

/// Rectangular region of interest in pixel coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RoiRect {
    pub row: usize,
    pub col: usize,
    pub width: usize,
    pub height: usize,
}

/// Which estimator processes each frame pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSeriesMethod {
    Ssop,
    Oxygan,
}

impl TimeSeriesMethod {
    pub fn label(&self) -> &'static str {
        match self {
            TimeSeriesMethod::Ssop => "ssop",
            TimeSeriesMethod::Oxygan => "oxygan",
        }
    }
}

/// One sample of the output series.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub mean: f64,
    pub std: f64,
}

/// Everything a frame pair needs to become a saturation map.
pub struct TimeSeriesContext<'a> {
    pub refs: &'a ReferenceBundle,
    pub lut: &'a ReflectanceLut,
    pub basis: &'a ChromophoreBasis,
    pub weights: Option<&'a GeneratorWeights>,
    pub lowpass_cutoff: f64,
    pub highpass_halfwidth: f64,
}

/// Result of a time-series run.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub method: TimeSeriesMethod,
    pub points: Vec<SeriesPoint>,
    pub checkpoints: Vec<SeriesPoint>,
    pub warnings: Vec<String>,
}

/// Reads a JSON-lines frame manifest.
pub fn read_frame_manifest(path: &Path) -> Result<Vec<FrameRecord>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Reads a JSON-lines checkpoint manifest.
pub fn read_checkpoint_manifest(path: &Path) -> Result<Vec<CheckpointRecord>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// A 659/851 nm frame pair forming one time sample.
pub type FramePair = (FrameRecord, FrameRecord);

/// How frames combine into wavelength pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    /// Strictly alternating frames chunked two at a time (the default:
    /// the acquisition alternates wavelengths every frame).
    Adjacent,
    /// Each frame pairs with the nearest preceding frame of the other
    /// wavelength; tolerates dropped or repeated frames.
    NearestPreceding,
}

/// Pairs frames of alternating wavelength according to `mode`. Frames
/// that find no partner are dropped with a warning; unordered input is an
/// error, and so is non-alternation in [`PairingMode::Adjacent`].
pub fn pair_frames(
    frames: &[FrameRecord],
    mode: PairingMode,
) -> Result<(Vec<FramePair>, Vec<String>)> {
    for w in frames.windows(2) {
        if w[1].t_seconds < w[0].t_seconds {
            return Err(Error::InvalidArgument(
                "frame manifest is not time-ordered".into(),
            ));
        }
    }
    let is = |rec: &FrameRecord, nm: f64| (rec.wavelength_nm - nm).abs() <= 0.5;
    let mut pairs = Vec::with_capacity(frames.len() / 2);
    let mut warnings = Vec::new();
    match mode {
        PairingMode::Adjacent => {
            let mut chunks = frames.chunks_exact(2);
            for pair in &mut chunks {
                let (a, b) = (&pair[0], &pair[1]);
                let has = |nm: f64| is(a, nm) || is(b, nm);
                if !has(659.0) || !has(851.0) {
                    return Err(Error::InvalidArgument(format!(
                        "frames at t = {} and {} do not alternate wavelengths ({} / {} nm)",
                        a.t_seconds, b.t_seconds, a.wavelength_nm, b.wavelength_nm
                    )));
                }
                pairs.push((a.clone(), b.clone()));
            }
            if let [trailing] = chunks.remainder() {
                warnings.push(format!(
                    "dropping unpaired trailing frame at t = {} ({} nm)",
                    trailing.t_seconds, trailing.wavelength_nm
                ));
            }
        }
        PairingMode::NearestPreceding => {
            // Walk in time order; complete a pair whenever the current
            // frame has an unconsumed predecessor at the other wavelength.
            let mut pending: Option<&FrameRecord> = None;
            for rec in frames {
                if !is(rec, 659.0) && !is(rec, 851.0) {
                    return Err(Error::InvalidArgument(format!(
                        "frame at t = {} has unsupported wavelength {} nm",
                        rec.t_seconds, rec.wavelength_nm
                    )));
                }
                match pending {
                    Some(prev) if prev.wavelength_nm != rec.wavelength_nm => {
                        pairs.push((prev.clone(), rec.clone()));
                        pending = None;
                    }
                    Some(prev) => {
                        warnings.push(format!(
                            "dropping frame at t = {} ({} nm): superseded by a newer \
                             frame at the same wavelength",
                            prev.t_seconds, prev.wavelength_nm
                        ));
                        pending = Some(rec);
                    }
                    None => pending = Some(rec),
                }
            }
            if let Some(prev) = pending {
                warnings.push(format!(
                    "dropping unpaired trailing frame at t = {} ({} nm)",
                    prev.t_seconds, prev.wavelength_nm
                ));
            }
        }
    }
    Ok((pairs, warnings))
}

/// Mean and standard deviation of valid saturation values inside the ROI.
pub fn roi_stats(map: &StO2Map, roi: &RoiRect) -> Result<(f64, f64)> {
    let plane = map.plane();
    if roi.width == 0
        || roi.height == 0
        || roi.row + roi.height > plane.height()
        || roi.col + roi.width > plane.width()
    {
        return Err(Error::InvalidArgument(format!(
            "ROI {}x{}@({},{}) lies outside the {}x{} image",
            roi.width,
            roi.height,
            roi.row,
            roi.col,
            plane.width(),
            plane.height()
        )));
    }
    let mut values = Vec::with_capacity(roi.width * roi.height);
    for r in roi.row..roi.row + roi.height {
        for c in roi.col..roi.col + roi.width {
            let v = plane.get(r, c);
            if v.is_finite() {
                values.push(v);
            }
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    Ok((mean, var.sqrt()))
}

fn sto2_for_pair(
    pair: &FramePair,
    base_dir: &Path,
    method: TimeSeriesMethod,
    ctx: &TimeSeriesContext<'_>,
) -> Result<StO2Map> {
    let load = |rec: &FrameRecord| -> Result<crate::raster::ImagePlane> {
        Ok(file_io::read_plane(&base_dir.join(&rec.path))?.0)
    };
    let (rec659, rec851) = if (pair.0.wavelength_nm - 659.0).abs() <= 0.5 {
        (&pair.0, &pair.1)
    } else {
        (&pair.1, &pair.0)
    };
    let img659 = load(rec659)?;
    let img851 = load(rec851)?;
    match method {
        TimeSeriesMethod::Ssop => Ok(ssop_sto2(
            &img659,
            &img851,
            ctx.refs,
            ctx.lut,
            ctx.basis,
            ctx.lowpass_cutoff,
            ctx.highpass_halfwidth,
        )?
        .sto2),
        TimeSeriesMethod::Oxygan => {
            let weights = ctx.weights.ok_or_else(|| {
                Error::InvalidArgument("neural method needs a weight container".into())
            })?;
            let tensor = build_input_tensor(
                &img659,
                &img851,
                ctx.refs.for_wavelength(659.0)?,
                ctx.refs.for_wavelength(851.0)?,
            )?;
            forward_generator(&tensor, weights)
        }
    }
}

/// Processes a frame sequence into an ROI saturation trend, with optional
/// sparse checkpoints evaluated over the same region. Pairs are processed
/// in parallel; output order follows the timestamps.
pub fn roi_timeseries(
    frames: &[FrameRecord],
    base_dir: &Path,
    roi: &RoiRect,
    method: TimeSeriesMethod,
    ctx: &TimeSeriesContext<'_>,
    checkpoints: &[CheckpointRecord],
) -> Result<TimeSeries> {
    roi_timeseries_with_pairing(
        frames,
        base_dir,
        roi,
        method,
        ctx,
        checkpoints,
        PairingMode::Adjacent,
    )
}

/// [`roi_timeseries`] with an explicit frame-pairing strategy.
#[allow(clippy::too_many_arguments)]
pub fn roi_timeseries_with_pairing(
    frames: &[FrameRecord],
    base_dir: &Path,
    roi: &RoiRect,
    method: TimeSeriesMethod,
    ctx: &TimeSeriesContext<'_>,
    checkpoints: &[CheckpointRecord],
    pairing: PairingMode,
) -> Result<TimeSeries> {
    let (pairs, warnings) = pair_frames(frames, pairing)?;
    let points: Result<Vec<SeriesPoint>> = pairs
        .par_iter()
        .map(|pair| {
            let map = sto2_for_pair(pair, base_dir, method, ctx)?;
            let (mean, std) = roi_stats(&map, roi)?;
            Ok(SeriesPoint {
                t: 0.5 * (pair.0.t_seconds + pair.1.t_seconds),
                mean,
                std,
            })
        })
        .collect();
    let points = points?;

    let checkpoint_points: Result<Vec<SeriesPoint>> = checkpoints
        .iter()
        .map(|rec| {
            let (plane, _) = file_io::read_plane(&base_dir.join(&rec.path))?;
            let map = StO2Map::new(plane)?;
            let (mean, std) = roi_stats(&map, roi)?;
            Ok(SeriesPoint {
                t: rec.t_seconds,
                mean,
                std,
            })
        })
        .collect();

    Ok(TimeSeries {
        method,
        points,
        checkpoints: checkpoint_points?,
        warnings,
    })
}

/// Fixed-column CSV: `t,mean_sto2,std_sto2,method`. Checkpoint rows use
/// the method label `sfdi`.
pub fn to_csv(series: &TimeSeries) -> String {
    let mut out = String::from("t,mean_sto2,std_sto2,method\n");
    for p in &series.points {
        let _ = writeln!(out, "{},{},{},{}", p.t, p.mean, p.std, series.method.label());
    }
    for p in &series.checkpoints {
        let _ = writeln!(out, "{},{},{},sfdi", p.t, p.mean, p.std);
    }
    out
}

/// Plain-text SVG line plot of the trend with checkpoint markers.
pub fn to_svg(series: &TimeSeries, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const ML: f64 = 60.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;

    let all: Vec<&SeriesPoint> = series.points.iter().chain(&series.checkpoints).collect();
    let (t0, t1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.t), hi.max(p.t))
        });
    let (t0, t1) = if all.is_empty() || t1 <= t0 {
        (0.0, 1.0)
    } else {
        (t0, t1)
    };
    let x = |t: f64| ML + (t - t0) / (t1 - t0) * (W - ML - MR);
    let y = |v: f64| MT + (1.0 - v.clamp(0.0, 1.0)) * (H - MT - MB);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        title
    );
    // Axes.
    let _ = writeln!(
        svg,
        "  <line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - MB,
        W - MR,
        H - MB
    );
    let _ = writeln!(
        svg,
        "  <line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>",
        H - MB
    );
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let _ = writeln!(
            svg,
            "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{:.1}</text>",
            ML - 6.0,
            y(v) + 4.0,
            v
        );
        let _ = writeln!(
            svg,
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#cccccc\"/>",
            ML,
            y(v),
            W - MR,
            y(v)
        );
    }
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">t (s)</text>",
        (ML + W - MR) / 2.0,
        H - 14.0
    );

    if !series.points.is_empty() {
        let pts: Vec<String> = series
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.t), y(p.mean)))
            .collect();
        let _ = writeln!(
            svg,
            "  <polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
    }
    for p in &series.checkpoints {
        let _ = writeln!(
            svg,
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"none\" stroke=\"#c23b22\" stroke-width=\"1.5\"/>",
            x(p.t),
            y(p.mean)
        );
    }
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" fill=\"#1f6fb2\">{}</text>",
        W - MR - 150.0,
        MT + 12.0,
        series.method.label()
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" fill=\"#c23b22\">sfdi checkpoints</text>",
        W - MR - 150.0,
        MT + 28.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ImagePlane;

    fn frame(t: f64, nm: f64) -> FrameRecord {
        FrameRecord {
            t_seconds: t,
            wavelength_nm: nm,
            path: format!("f_{t}.f32"),
        }
    }

    #[test]
    fn odd_frame_count_drops_trailing_with_warning() {
        let frames: Vec<FrameRecord> = (0..7)
            .map(|i| frame(i as f64 * 0.73, if i % 2 == 0 { 659.0 } else { 851.0 }))
            .collect();
        let (pairs, warnings) = pair_frames(&frames, PairingMode::Adjacent).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("unpaired trailing frame"));
    }

    #[test]
    fn non_alternating_or_unordered_frames_rejected() {
        let frames = vec![frame(0.0, 659.0), frame(0.7, 659.0)];
        assert!(pair_frames(&frames, PairingMode::Adjacent).is_err());
        let frames = vec![frame(1.0, 659.0), frame(0.5, 851.0)];
        assert!(pair_frames(&frames, PairingMode::Adjacent).is_err());
    }

    #[test]
    fn nearest_preceding_pairing_tolerates_dropped_frames() {
        // A repeated 659 frame (a dropped 851 in between): the stale frame
        // is superseded with a warning and pairing recovers.
        let frames = vec![
            frame(0.0, 659.0),
            frame(0.73, 851.0),
            frame(1.46, 659.0),
            frame(2.19, 659.0),
            frame(2.92, 851.0),
        ];
        assert!(pair_frames(&frames, PairingMode::Adjacent).is_err());
        let (pairs, warnings) = pair_frames(&frames, PairingMode::NearestPreceding).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].0.t_seconds, 2.19);
        assert_eq!(pairs[1].1.t_seconds, 2.92);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("superseded"));
    }

    #[test]
    fn roi_stats_and_bounds() {
        let plane = ImagePlane::from_fn(10, 10, 0.5, |r, _| (r as f64) / 10.0).unwrap();
        let map = StO2Map::new(plane).unwrap();
        let roi = RoiRect {
            row: 2,
            col: 0,
            width: 10,
            height: 2,
        };
        let (mean, std) = roi_stats(&map, &roi).unwrap();
        assert!((mean - 0.25).abs() < 1e-12);
        assert!((std - 0.05).abs() < 1e-12);

        let outside = RoiRect {
            row: 8,
            col: 8,
            width: 4,
            height: 4,
        };
        assert!(roi_stats(&map, &outside).is_err());
    }

    #[test]
    fn csv_and_svg_shapes() {
        let series = TimeSeries {
            method: TimeSeriesMethod::Ssop,
            points: vec![
                SeriesPoint {
                    t: 0.0,
                    mean: 0.8,
                    std: 0.01,
                },
                SeriesPoint {
                    t: 1.46,
                    mean: 0.42,
                    std: 0.02,
                },
            ],
            checkpoints: vec![SeriesPoint {
                t: 0.73,
                mean: 0.79,
                std: 0.005,
            }],
            warnings: vec![],
        };
        let csv = to_csv(&series);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,mean_sto2,std_sto2,method");
        assert_eq!(lines.next().unwrap(), "0,0.8,0.01,ssop");
        assert!(csv.lines().any(|l| l.ends_with(",sfdi")));

        let svg = to_svg(&series, "occlusion");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("<circle"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
