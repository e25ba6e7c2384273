//! Config file schema for `oxymap phantom gen`.

use oxymap_core::phantom::SceneConfig;
use serde::{Deserialize, Serialize};

/// Top-level phantom generation config (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomGenConfig {
    /// Number of scenes to generate (seeds are `seed`, `seed+1`, ...).
    #[serde(default = "one")]
    pub scenes: usize,
    pub scene: SceneConfig,
    /// Noise on rendered frames, as a fraction of the local signal.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_fx")]
    pub fx: f64,
    #[serde(default = "default_n")]
    pub refractive_index: f64,
    #[serde(default = "default_ref_mua")]
    pub reference_mua: f64,
    #[serde(default = "default_ref_musp")]
    pub reference_musp: f64,
    /// What to write per scene.
    #[serde(default)]
    pub emit: EmitConfig,
    /// Optional paired-patch dataset.
    #[serde(default)]
    pub dataset: Option<DatasetSection>,
    /// Optional alternating-wavelength frame sequence.
    #[serde(default)]
    pub timeseries: Option<TimeseriesSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmitConfig {
    /// Six-frame phase triplets (both bands) per wavelength.
    #[serde(default = "yes")]
    pub triplets: bool,
    /// Single-phase structured frames per wavelength.
    #[serde(default = "yes")]
    pub single_phase: bool,
    /// The 3-channel encoded network input.
    #[serde(default = "yes")]
    pub input_tensor: bool,
    /// Ground-truth saturation map and an all-true mask.
    #[serde(default = "yes")]
    pub truth: bool,
}

impl Default for EmitConfig {
    fn default() -> Self {
        Self {
            triplets: true,
            single_phase: true,
            input_tensor: true,
            truth: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSection {
    #[serde(default = "default_patch")]
    pub patch_size: usize,
    #[serde(default = "default_stride")]
    pub nominal_stride: usize,
    #[serde(default = "default_jitter")]
    pub stride_jitter: usize,
    #[serde(default = "yes")]
    pub augment: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeseriesSection {
    /// Scene saturation per frame pair, e.g. a step occlusion profile.
    pub sto2_steps: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt_seconds: f64,
    /// Emit a ground-truth checkpoint every k-th pair (0 = never).
    #[serde(default = "default_chk")]
    pub checkpoint_every: usize,
    #[serde(default = "default_thb")]
    pub thb: f64,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_fx() -> f64 {
    0.2
}
fn default_n() -> f64 {
    1.4
}
fn default_ref_mua() -> f64 {
    0.018
}
fn default_ref_musp() -> f64 {
    1.1
}
fn default_patch() -> usize {
    256
}
fn default_stride() -> usize {
    76
}
fn default_jitter() -> usize {
    20
}
fn default_dt() -> f64 {
    0.73
}
fn default_chk() -> usize {
    2
}
fn default_thb() -> f64 {
    0.05
}
