//! End-to-end closure tests: rendered phantoms must round-trip through
//! the conventional pipeline, the single-snapshot pipeline, and the
//! region-of-interest time series within their stated tolerances.

use oxymap_core::chromophore::{sto2_from_mua, ChromophoreBasis};
use oxymap_core::phantom::{
    generate_scene, render_reference, render_structured, FeatureStyle, Scene, SceneConfig,
};
use oxymap_core::photon::{build_default_lut, build_lut, DiffusionModel, ReflectanceLut};
use oxymap_core::raster::{nmae, nmae_planes, ImagePlane, Mask};
use oxymap_core::sfdi::{
    calibrate, demodulate, sfdi_optical_properties, Band, PhaseTriplet, ReferenceBundle,
    ReferenceMeasurement,
};
use oxymap_core::ssop::ssop_sto2;
use oxymap_core::timeseries::{
    roi_timeseries, to_csv, to_svg, CheckpointRecord, FrameRecord, RoiRect, TimeSeriesContext,
    TimeSeriesMethod,
};

const FX: f64 = 0.2;
const N_TISSUE: f64 = 1.4;
const PHASES: [f64; 3] = [
    0.0,
    2.0 * std::f64::consts::PI / 3.0,
    4.0 * std::f64::consts::PI / 3.0,
];

fn basis() -> ChromophoreBasis {
    ChromophoreBasis::builtin_hemoglobin()
        .subset(&[659.0, 851.0])
        .unwrap()
}

fn render_triplet(scene: &Scene, wavelength: f64, fx: f64) -> PhaseTriplet {
    let frames: Vec<ImagePlane> = PHASES
        .iter()
        .map(|&p| render_structured(scene, wavelength, fx, p, 0.0, N_TISSUE).unwrap())
        .collect();
    PhaseTriplet::new(
        frames[0].clone(),
        frames[1].clone(),
        frames[2].clone(),
        fx,
        wavelength,
    )
    .unwrap()
}

fn reference_for(scene: &Scene, wavelength: f64) -> ReferenceMeasurement {
    let (w, h) = scene.dims();
    render_reference(w, h, scene.pitch_mm(), 0.018, 1.1, wavelength, FX, N_TISSUE).unwrap()
}

fn small_lut() -> ReflectanceLut {
    let model = DiffusionModel::new(N_TISSUE).unwrap();
    build_lut(&model, (0.001, 0.5), (0.1, 5.0), (96, 96), 0.0, FX).unwrap()
}

fn scene_config(width: usize, height: usize, feature: FeatureStyle) -> SceneConfig {
    SceneConfig {
        width,
        height,
        feature,
        ..SceneConfig::default()
    }
}

#[test]
fn calibration_round_trips_rendered_reflectance() {
    // Demodulated sample over rendered reference recovers the scene's true
    // forward reflectance to much better than 0.5%.
    let scene = generate_scene(
        &scene_config(64, 48, FeatureStyle::SmoothBlob { blobs: 4 }),
        &basis(),
        21,
    )
    .unwrap();
    let lut = small_lut();
    let reference = reference_for(&scene, 659.0);
    let triplet = render_triplet(&scene, 659.0, FX);
    let (_, m_ac) = demodulate(&triplet).unwrap();
    let rd = calibrate(&m_ac, &reference, Band::Ac, &lut).unwrap();

    let mua = scene.mua(659.0).unwrap();
    let musp = scene.musp(659.0).unwrap();
    for r in 0..rd.height() {
        for c in 0..rd.width() {
            let truth = oxymap_core::photon::diffuse_reflectance(
                mua.get(r, c),
                musp.get(r, c),
                FX,
                N_TISSUE,
            )
            .unwrap();
            let rel = (rd.get(r, c) - truth).abs() / truth;
            assert!(rel < 0.005, "rel error {rel} at ({r},{c})");
        }
    }
}

#[test]
fn homogeneous_phantom_recovers_optical_properties() {
    let scene = generate_scene(
        &scene_config(64, 48, FeatureStyle::Flat { sto2: 0.62, thb: 0.06 }),
        &basis(),
        3,
    )
    .unwrap();
    let lut = small_lut();
    let reference = reference_for(&scene, 659.0);
    let dc = render_triplet(&scene, 659.0, 0.0);
    let ac = render_triplet(&scene, 659.0, FX);
    let (map, stats) = sfdi_optical_properties(&dc, &ac, &reference, &lut).unwrap();
    assert_eq!(stats.out_of_gamut, 0);

    let mua_true = scene.mua(659.0).unwrap().get(0, 0);
    let musp_true = scene.musp(659.0).unwrap().get(0, 0);
    for r in 0..map.dims().1 {
        for c in 0..map.dims().0 {
            assert!(((map.mua().get(r, c) - mua_true) / mua_true).abs() < 0.01);
            assert!(((map.musp().get(r, c) - musp_true) / musp_true).abs() < 0.01);
        }
    }
}

#[test]
fn two_region_phantom_recovers_region_means() {
    let scene = generate_scene(
        &scene_config(64, 48, FeatureStyle::TwoRegion {
            sto2_a: 0.85,
            sto2_b: 0.45,
            thb: 0.06,
        }),
        &basis(),
        5,
    )
    .unwrap();
    let lut = small_lut();
    let reference = reference_for(&scene, 659.0);
    let dc = render_triplet(&scene, 659.0, 0.0);
    let ac = render_triplet(&scene, 659.0, FX);
    let (map, _) = sfdi_optical_properties(&dc, &ac, &reference, &lut).unwrap();

    // Region means with a 3-pixel margin around the vertical boundary.
    let mua_true = scene.mua(659.0).unwrap();
    let boundary = 32;
    for (c_lo, c_hi) in [(0usize, boundary - 3), (boundary + 3, 64)] {
        let mut got = 0.0;
        let mut want = 0.0;
        let mut n = 0;
        for r in 0..48 {
            for c in c_lo..c_hi {
                got += map.mua().get(r, c);
                want += mua_true.get(r, c);
                n += 1;
            }
        }
        let (got, want) = (got / n as f64, want / n as f64);
        assert!(
            ((got - want) / want).abs() < 0.01,
            "region [{c_lo},{c_hi}): mean {got} vs {want}"
        );
    }
}

#[test]
fn full_pipeline_closure_on_smooth_phantom() {
    // Renderer/pipeline closure: render three phases at both frequencies
    // and both wavelengths, run the full conventional path, and recover
    // the scene saturation with interior NMAE below 0.005 noise-free.
    // This closure defines ground truth for all downstream comparisons.
    let scene = generate_scene(
        &scene_config(64, 64, FeatureStyle::SmoothBlob { blobs: 5 }),
        &basis(),
        8,
    )
    .unwrap();
    let lut = build_default_lut().unwrap();
    let mut maps = Vec::new();
    for wavelength in [659.0, 851.0] {
        let reference = reference_for(&scene, wavelength);
        let dc = render_triplet(&scene, wavelength, 0.0);
        let ac = render_triplet(&scene, wavelength, FX);
        let (map, stats) = sfdi_optical_properties(&dc, &ac, &reference, &lut).unwrap();
        assert_eq!(stats.out_of_gamut, 0, "{wavelength} nm");
        maps.push(map);
    }
    let recovered = sto2_from_mua(&[&maps[0], &maps[1]], &basis()).unwrap();
    let truth = scene.sto2_truth().unwrap();
    let err = nmae(&recovered, &truth, &Mask::all_true(64, 64)).unwrap();
    assert!(err < 0.005, "closure NMAE {err}");
}

#[test]
fn ssop_noise_free_flat_phantom_sto2() {
    let scene = generate_scene(
        &scene_config(128, 96, FeatureStyle::Flat { sto2: 0.7, thb: 0.05 }),
        &basis(),
        12,
    )
    .unwrap();
    let lut = small_lut();
    let refs = ReferenceBundle::new(vec![
        reference_for(&scene, 659.0),
        reference_for(&scene, 851.0),
    ]);
    let img659 = render_structured(&scene, 659.0, FX, 0.0, 0.0, N_TISSUE).unwrap();
    let img851 = render_structured(&scene, 851.0, FX, 0.0, 0.0, N_TISSUE).unwrap();
    let run = ssop_sto2(&img659, &img851, &refs, &lut, &basis(), 0.5, 0.5).unwrap();

    let truth = scene.sto2_truth().unwrap();
    let interior = Mask::interior(128, 96, run.low_confidence_border);
    let err = nmae_planes(run.sto2.plane(), truth.plane(), &interior).unwrap();
    assert!(err < 0.02, "interior NMAE {err}");
}

#[test]
fn occlusion_style_series_tracks_step_changes() {
    // A synthetic occlusion: saturation steps 0.8 -> 0.4 -> 0.8 across
    // three plateaus; the ROI trend must sit within 0.05 of each plateau
    // and a constant scene must give a flat series.
    let dir = std::env::temp_dir().join(format!("oxymap_ts_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let basis2 = basis();
    let lut = small_lut();
    let plateaus = [0.8, 0.8, 0.4, 0.4, 0.8, 0.8];
    let dt = 0.73;

    let mut frames = Vec::new();
    let mut checkpoints = Vec::new();
    let mut refs = None;
    for (i, &sto2) in plateaus.iter().enumerate() {
        let scene = generate_scene(
            &scene_config(96, 96, FeatureStyle::Flat { sto2, thb: 0.05 }),
            &basis2,
            100 + i as u64,
        )
        .unwrap();
        if refs.is_none() {
            refs = Some(ReferenceBundle::new(vec![
                reference_for(&scene, 659.0),
                reference_for(&scene, 851.0),
            ]));
        }
        for (j, wavelength) in [659.0, 851.0].iter().enumerate() {
            let img =
                render_structured(&scene, *wavelength, FX, 0.0, 0.005, N_TISSUE).unwrap();
            let name = format!("frame_{i}_{j}.f32");
            oxymap_core::io::write_plane(&dir.join(&name), &img, "intensity").unwrap();
            frames.push(FrameRecord {
                t_seconds: (2 * i + j) as f64 * dt,
                wavelength_nm: *wavelength,
                path: name,
            });
        }
        // Sparse checkpoints from the exact scene truth.
        if i % 2 == 0 {
            let name = format!("chk_{i}.f32");
            oxymap_core::io::write_plane(
                &dir.join(&name),
                scene.sto2_truth().unwrap().plane(),
                "sto2",
            )
            .unwrap();
            checkpoints.push(CheckpointRecord {
                t_seconds: 2.0 * i as f64 * dt,
                path: name,
            });
        }
    }

    let refs = refs.unwrap();
    let ctx = TimeSeriesContext {
        refs: &refs,
        lut: &lut,
        basis: &basis2,
        weights: None,
        lowpass_cutoff: 0.5,
        highpass_halfwidth: 0.5,
    };
    let roi = RoiRect {
        row: 32,
        col: 32,
        width: 32,
        height: 32,
    };
    let series = roi_timeseries(
        &frames,
        &dir,
        &roi,
        TimeSeriesMethod::Ssop,
        &ctx,
        &checkpoints,
    )
    .unwrap();
    assert_eq!(series.points.len(), plateaus.len());
    assert_eq!(series.checkpoints.len(), 3);
    for (point, &expected) in series.points.iter().zip(&plateaus) {
        assert!(
            (point.mean - expected).abs() < 0.05,
            "t={}: mean {} vs plateau {expected}",
            point.t,
            point.mean
        );
        // Flat scene: the ROI is spatially uniform.
        assert!(point.std < 0.01, "t={}: std {}", point.t, point.std);
    }

    let csv = to_csv(&series);
    assert!(csv.starts_with("t,mean_sto2,std_sto2,method\n"));
    assert_eq!(csv.lines().count(), 1 + plateaus.len() + 3);
    let svg = to_svg(&series, "synthetic occlusion");
    assert!(svg.contains("<polyline") && svg.contains("<circle"));

    // One extra trailing frame pairs with nothing: dropped with a warning.
    let mut frames_odd = frames.clone();
    frames_odd.push(FrameRecord {
        t_seconds: 12.0 * dt,
        wavelength_nm: 659.0,
        path: frames[0].path.clone(),
    });
    let series_odd = roi_timeseries(
        &frames_odd,
        &dir,
        &roi,
        TimeSeriesMethod::Ssop,
        &ctx,
        &[],
    )
    .unwrap();
    assert_eq!(series_odd.points.len(), plateaus.len());
    assert_eq!(series_odd.warnings.len(), 1);

    std::fs::remove_dir_all(&dir).ok();
}
