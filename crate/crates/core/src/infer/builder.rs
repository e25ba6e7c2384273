//! Default fusion-generator architecture and synthetic weight
//! initialization.
//!
//! The generator is an encoder-decoder with long additive skips between
//! same-level branches and a short residual addition inside each level's
//! five-convolution block (outputs of the first and fourth convolutions
//! are summed and fed to the fifth). Descents are 2x2 max pools, ascents
//! 3x3 stride-2 up-convolutions. Encoder blocks use plain rectifiers,
//! decoder blocks leaky rectifiers with slope 0.2, and a final 3x3
//! convolution with tanh produces the single-channel output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use super::graph::{GeneratorWeights, LayerOp, LayerSpec, Manifest, TensorData, INPUT_NAME};
use super::layers::Activation;
use crate::error::{Error, Result};

/// Decoder leaky-rectifier slope.
pub const LEAKY_SLOPE: f64 = 0.2;
/// Default encoder depth (levels); the deepest level is the bridge.
pub const DEFAULT_DEPTH: usize = 4;
/// Default channel count of the first level (doubling per level).
pub const DEFAULT_BASE_CHANNELS: usize = 64;

fn conv(name: &str, input: &str, in_ch: usize, out_ch: usize, act: Activation, level: i32) -> LayerSpec {
    LayerSpec {
        name: name.into(),
        kind: LayerOp::Conv3x3,
        in_ch,
        out_ch,
        activation: act,
        leaky_slope: if act == Activation::LeakyRelu { LEAKY_SLOPE } else { 0.0 },
        level,
        inputs: vec![input.into()],
    }
}

/// Builds the manifest for a fusion generator of the given depth and base
/// channel width.
pub fn fusion_manifest(
    depth: usize,
    base_channels: usize,
    input_channels: usize,
    output_channels: usize,
) -> Result<Manifest> {
    if depth < 1 {
        return Err(Error::InvalidArgument("depth must be >= 1".into()));
    }
    if base_channels == 0 || input_channels == 0 || output_channels == 0 {
        return Err(Error::InvalidArgument("channel counts must be >= 1".into()));
    }
    let ch = |level: usize| base_channels << (level - 1);
    let mut layers = Vec::new();

    // Five-convolution residual block; returns the block output buffer.
    let block = |layers: &mut Vec<LayerSpec>,
                     prefix: String,
                     input: String,
                     in_ch: usize,
                     out_ch: usize,
                     act: Activation,
                     level: i32|
     -> String {
        layers.push(conv(&format!("{prefix}_conv1"), &input, in_ch, out_ch, act, level));
        layers.push(conv(
            &format!("{prefix}_conv2"),
            &format!("{prefix}_conv1"),
            out_ch,
            out_ch,
            act,
            level,
        ));
        layers.push(conv(
            &format!("{prefix}_conv3"),
            &format!("{prefix}_conv2"),
            out_ch,
            out_ch,
            act,
            level,
        ));
        layers.push(conv(
            &format!("{prefix}_conv4"),
            &format!("{prefix}_conv3"),
            out_ch,
            out_ch,
            act,
            level,
        ));
        layers.push(LayerSpec {
            name: format!("{prefix}_res"),
            kind: LayerOp::Add,
            in_ch: 0,
            out_ch: 0,
            activation: Activation::None,
            leaky_slope: 0.0,
            level,
            inputs: vec![format!("{prefix}_conv1"), format!("{prefix}_conv4")],
        });
        layers.push(conv(
            &format!("{prefix}_conv5"),
            &format!("{prefix}_res"),
            out_ch,
            out_ch,
            act,
            level,
        ));
        format!("{prefix}_conv5")
    };

    // Encoder with pools between levels; the deepest level is the bridge.
    let mut prev = INPUT_NAME.to_string();
    let mut prev_ch = input_channels;
    for level in 1..=depth {
        let out = block(
            &mut layers,
            format!("enc{level}"),
            prev.clone(),
            prev_ch,
            ch(level),
            Activation::Relu,
            level as i32,
        );
        prev_ch = ch(level);
        if level < depth {
            layers.push(LayerSpec {
                name: format!("pool{level}"),
                kind: LayerOp::Maxpool2,
                in_ch: 0,
                out_ch: 0,
                activation: Activation::None,
                leaky_slope: 0.0,
                level: level as i32,
                inputs: vec![out.clone()],
            });
            prev = format!("pool{level}");
        } else {
            prev = out;
        }
    }

    // Decoder: up-convolve, add the same-level encoder output, run the
    // leaky block.
    for level in (1..depth).rev() {
        layers.push(LayerSpec {
            name: format!("dec{level}_up"),
            kind: LayerOp::Upconv3x3,
            in_ch: prev_ch,
            out_ch: ch(level),
            activation: Activation::LeakyRelu,
            leaky_slope: LEAKY_SLOPE,
            level: level as i32,
            inputs: vec![prev.clone()],
        });
        layers.push(LayerSpec {
            name: format!("dec{level}_skip"),
            kind: LayerOp::Add,
            in_ch: 0,
            out_ch: 0,
            activation: Activation::None,
            leaky_slope: 0.0,
            level: level as i32,
            inputs: vec![format!("dec{level}_up"), format!("enc{level}_conv5")],
        });
        prev = block(
            &mut layers,
            format!("dec{level}"),
            format!("dec{level}_skip"),
            ch(level),
            ch(level),
            Activation::LeakyRelu,
            level as i32,
        );
        prev_ch = ch(level);
    }

    layers.push(LayerSpec {
        name: "final".into(),
        kind: LayerOp::FinalConv3x3,
        in_ch: prev_ch,
        out_ch: output_channels,
        activation: Activation::Tanh,
        leaky_slope: 0.0,
        level: 0,
        inputs: vec![prev],
    });

    Ok(Manifest {
        format: "oxw".into(),
        version: 1,
        role: "generator".into(),
        depth,
        input_channels,
        output_channels,
        conv_padding: 1,
        upconv_output_padding: 1,
        provenance: String::new(),
        layers,
        tensors: Vec::new(),
    })
}

/// Weight initialization for synthetic generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightInit {
    /// All weights and biases zero.
    Zero,
    /// Fan-in scaled Gaussian weights, zero biases.
    HeNormal,
}

/// Standard normal via Box-Muller on the seeded stream.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.gen();
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

/// Synthesizes weights for a manifest. Values are quantized to f32 at
/// creation so in-memory weights match their serialized form bit for bit.
pub fn synthesize_weights(manifest: Manifest, init: WeightInit, seed: u64) -> GeneratorWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = HashMap::new();
    for layer in &manifest.layers {
        if !layer.kind.has_weights() {
            continue;
        }
        let (shape, fan_in) = match layer.kind {
            LayerOp::Conv3x3 | LayerOp::FinalConv3x3 => (
                vec![layer.out_ch, layer.in_ch, 3, 3],
                layer.in_ch * 9,
            ),
            LayerOp::Upconv3x3 => (
                vec![layer.in_ch, layer.out_ch, 3, 3],
                layer.in_ch * 9,
            ),
            _ => unreachable!(),
        };
        let count: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            WeightInit::Zero => vec![0.0; count],
            WeightInit::HeNormal => {
                let std = (2.0 / fan_in as f64).sqrt();
                (0..count)
                    .map(|_| (normal(&mut rng) * std) as f32 as f64)
                    .collect()
            }
        };
        tensors.insert(
            format!("{}.weight", layer.name),
            TensorData { shape, values },
        );
        tensors.insert(
            format!("{}.bias", layer.name),
            TensorData {
                shape: vec![layer.out_ch],
                values: vec![0.0; layer.out_ch],
            },
        );
    }
    let mut manifest = manifest;
    manifest.provenance = match init {
        WeightInit::Zero => format!("synthetic zero init, seed {seed}"),
        WeightInit::HeNormal => format!("synthetic fan-in Gaussian init, seed {seed}"),
    };
    GeneratorWeights { manifest, tensors }
}
