//! Shared fixtures for the benchmark targets.

use oxymap_core::chromophore::ChromophoreBasis;
use oxymap_core::infer::{fusion_manifest, synthesize_weights, GeneratorWeights, WeightInit};
use oxymap_core::phantom::{
    generate_scene, render_structured, FeatureStyle, Scene, SceneConfig,
};
use oxymap_core::photon::{build_lut, DiffusionModel, ReflectanceLut};
use oxymap_core::raster::ImagePlane;

pub const FX: f64 = 0.2;
pub const N_TISSUE: f64 = 1.4;

/// The committed-fixture architecture (depth 3, base width 8).
pub fn fixture_weights() -> GeneratorWeights {
    synthesize_weights(
        fusion_manifest(3, 8, 3, 1).expect("manifest"),
        WeightInit::HeNormal,
        0x0758_c0de,
    )
}

/// A production-width generator (depth 4, base width 64).
pub fn full_width_weights() -> GeneratorWeights {
    synthesize_weights(
        fusion_manifest(4, 64, 3, 1).expect("manifest"),
        WeightInit::HeNormal,
        1,
    )
}

pub fn bench_basis() -> ChromophoreBasis {
    ChromophoreBasis::builtin_hemoglobin()
        .subset(&[659.0, 851.0])
        .expect("basis subset")
}

pub fn bench_scene(size: usize) -> Scene {
    let cfg = SceneConfig {
        width: size,
        height: size,
        feature: FeatureStyle::SmoothBlob { blobs: 5 },
        ..SceneConfig::default()
    };
    generate_scene(&cfg, &bench_basis(), 7).expect("scene")
}

pub fn bench_frame(scene: &Scene) -> ImagePlane {
    render_structured(scene, 659.0, FX, 0.0, 0.0, N_TISSUE).expect("render")
}

pub fn bench_lut(grid: usize) -> ReflectanceLut {
    let model = DiffusionModel::new(N_TISSUE).expect("model");
    build_lut(&model, (0.001, 0.5), (0.1, 5.0), (grid, grid), 0.0, FX).expect("lut")
}
