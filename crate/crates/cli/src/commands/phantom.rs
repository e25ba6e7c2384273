use anyhow::Context;
use clap::Args;
use oxymap_core::chromophore::ChromophoreBasis;
use oxymap_core::io as file_io;
use oxymap_core::phantom::{
    build_input_tensor, generate_scene, make_dataset, render_reference, render_structured,
    DatasetConfig, FeatureStyle, SceneConfig,
};
use oxymap_core::raster::Mask;
use oxymap_core::sfdi::ReferenceBundle;
use oxymap_core::timeseries::{CheckpointRecord, FrameRecord};
use serde::Serialize;
use std::io::Write as _;
use std::path::PathBuf;

use crate::config::PhantomGenConfig;

#[derive(Args)]
pub struct PhantomGenArgs {
    /// JSON config describing scenes and what to emit.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    out: String,
    scenes: usize,
    dataset_patches: usize,
    timeseries_frames: usize,
}

const PHASES: [f64; 3] = [
    0.0,
    2.0 * std::f64::consts::PI / 3.0,
    4.0 * std::f64::consts::PI / 3.0,
];

pub fn run(args: PhantomGenArgs) -> anyhow::Result<()> {
    crate::check_inputs("phantom gen", &[&args.config])?;
    let cfg: PhantomGenConfig = serde_json::from_str(
        &std::fs::read_to_string(&args.config).context("phantom gen: read config")?,
    )
    .context("phantom gen: parse config")?;
    std::fs::create_dir_all(&args.out).context("phantom gen: create output dir")?;

    let basis = ChromophoreBasis::builtin_hemoglobin()
        .subset(&[659.0, 851.0])
        .context("phantom gen: basis")?;
    basis
        .save(&args.out.join("basis.json"))
        .context("phantom gen: write basis")?;

    let (w, h) = (cfg.scene.width, cfg.scene.height);
    let pitch = cfg.scene.pitch_mm;
    let mk_ref = |wavelength: f64| {
        render_reference(
            w,
            h,
            pitch,
            cfg.reference_mua,
            cfg.reference_musp,
            wavelength,
            cfg.fx,
            cfg.refractive_index,
        )
    };
    let ref659 = mk_ref(659.0).context("phantom gen: reference 659")?;
    let ref851 = mk_ref(851.0).context("phantom gen: reference 851")?;
    let bundle = ReferenceBundle::new(vec![ref659.clone(), ref851.clone()]);
    bundle
        .save(&args.out.join("refs.bin"))
        .context("phantom gen: write reference bundle")?;

    let mut scenes = Vec::with_capacity(cfg.scenes);
    for i in 0..cfg.scenes {
        let scene = generate_scene(&cfg.scene, &basis, args.seed + i as u64)
            .context("phantom gen: scene")?;
        let dir = args.out.join(format!("scene_{i}"));
        std::fs::create_dir_all(&dir)?;

        for wavelength in [659.0_f64, 851.0] {
            let tag = wavelength as u32;
            if cfg.emit.triplets {
                for (band, fx) in [("dc", 0.0), ("ac", cfg.fx)] {
                    for (k, &phase) in PHASES.iter().enumerate() {
                        let img = render_structured(
                            &scene,
                            wavelength,
                            fx,
                            phase,
                            cfg.noise_sigma,
                            cfg.refractive_index,
                        )
                        .context("phantom gen: render triplet frame")?;
                        file_io::write_plane(
                            &dir.join(format!("{band}{k}_{tag}.f32")),
                            &img,
                            "intensity",
                        )?;
                    }
                }
            }
            if cfg.emit.single_phase {
                let img = render_structured(
                    &scene,
                    wavelength,
                    cfg.fx,
                    0.0,
                    cfg.noise_sigma,
                    cfg.refractive_index,
                )
                .context("phantom gen: render single-phase frame")?;
                file_io::write_plane(&dir.join(format!("single_{tag}.f32")), &img, "intensity")?;
            }
        }
        if cfg.emit.input_tensor {
            let img659 = render_structured(
                &scene,
                659.0,
                cfg.fx,
                0.0,
                cfg.noise_sigma,
                cfg.refractive_index,
            )?;
            let img851 = render_structured(
                &scene,
                851.0,
                cfg.fx,
                0.0,
                cfg.noise_sigma,
                cfg.refractive_index,
            )?;
            let tensor = build_input_tensor(&img659, &img851, &ref659, &ref851)
                .context("phantom gen: input tensor")?;
            tensor.save(&dir.join("input.f32"))?;
        }
        if cfg.emit.truth {
            let truth = scene.sto2_truth().context("phantom gen: truth")?;
            file_io::write_plane(&dir.join("sto2_gt.f32"), truth.plane(), "sto2")?;
            file_io::write_mask(&dir.join("mask.f32"), &Mask::all_true(w, h), pitch)?;
        }
        scenes.push(scene);
    }

    let mut dataset_patches = 0;
    if let Some(ds) = &cfg.dataset {
        let dconfig = DatasetConfig {
            patch_size: ds.patch_size,
            nominal_stride: ds.nominal_stride,
            stride_jitter: ds.stride_jitter,
            augment: ds.augment,
            noise_sigma: cfg.noise_sigma,
            fx: cfg.fx,
            refractive_index: cfg.refractive_index,
            reference_mua: cfg.reference_mua,
            reference_musp: cfg.reference_musp,
        };
        let records = make_dataset(&scenes, &dconfig, args.seed, &args.out.join("dataset"))
            .context("phantom gen: dataset")?;
        dataset_patches = records.len();
    }

    let mut timeseries_frames = 0;
    if let Some(ts) = &cfg.timeseries {
        let dir = args.out.join("frames");
        std::fs::create_dir_all(&dir)?;
        let mut frames: Vec<FrameRecord> = Vec::new();
        let mut checkpoints: Vec<CheckpointRecord> = Vec::new();
        for (i, &sto2) in ts.sto2_steps.iter().enumerate() {
            let step_cfg = SceneConfig {
                feature: FeatureStyle::Flat { sto2, thb: ts.thb },
                ..cfg.scene.clone()
            };
            let scene = generate_scene(&step_cfg, &basis, args.seed + 1000 + i as u64)
                .context("phantom gen: timeseries scene")?;
            for (j, wavelength) in [659.0_f64, 851.0].iter().enumerate() {
                let img = render_structured(
                    &scene,
                    *wavelength,
                    cfg.fx,
                    0.0,
                    cfg.noise_sigma,
                    cfg.refractive_index,
                )?;
                let name = format!("frame_{i:04}_{}.f32", *wavelength as u32);
                file_io::write_plane(&dir.join(&name), &img, "intensity")?;
                frames.push(FrameRecord {
                    t_seconds: (2 * i + j) as f64 * ts.dt_seconds,
                    wavelength_nm: *wavelength,
                    path: name,
                });
            }
            if ts.checkpoint_every > 0 && i % ts.checkpoint_every == 0 {
                let name = format!("chk_{i:04}.f32");
                file_io::write_plane(
                    &dir.join(&name),
                    scene.sto2_truth()?.plane(),
                    "sto2",
                )?;
                checkpoints.push(CheckpointRecord {
                    t_seconds: 2.0 * i as f64 * ts.dt_seconds,
                    path: name,
                });
            }
        }
        let mut f = std::fs::File::create(dir.join("frames.jsonl"))?;
        for rec in &frames {
            writeln!(f, "{}", serde_json::to_string(rec)?)?;
        }
        let mut f = std::fs::File::create(dir.join("checkpoints.jsonl"))?;
        for rec in &checkpoints {
            writeln!(f, "{}", serde_json::to_string(rec)?)?;
        }
        timeseries_frames = frames.len();
    }

    super::emit_summary(&Summary {
        command: "phantom gen",
        out: args.out.display().to_string(),
        scenes: cfg.scenes,
        dataset_patches,
        timeseries_frames,
    })
}
