//! Single-precision reference execution of the generator graph.
//!
//! This path mirrors how a training framework evaluates the network:
//! float32 storage and float32 accumulation, simple nested loops, no
//! parallelism, scatter-form transposed convolution. It shares no kernel
//! code with the engine in `layers`/`graph`, which computes in double
//! precision; the two are compared against each other in tests, and this
//! path generates the activation-oracle fixtures committed to the
//! repository.

use std::collections::HashMap;

use super::graph::{
    ActivationOracle, GeneratorWeights, LayerOp, Manifest, TensorData, INPUT_NAME, STO2_NAME,
};
use super::layers::Activation;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone)]
struct TensorF32 {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl TensorF32 {
    fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    #[inline]
    fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }
}

fn apply_activation(t: &mut TensorF32, act: Activation, slope: f32) {
    for v in t.data.iter_mut() {
        *v = match act {
            Activation::None => *v,
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu => {
                if *v < 0.0 {
                    *v * slope
                } else {
                    *v
                }
            }
            Activation::Tanh => v.tanh(),
        };
    }
}

fn conv_f32(input: &TensorF32, weight: &[f32], bias: &[f32], out_ch: usize) -> TensorF32 {
    let (ic_n, h, w) = (input.channels, input.height, input.width);
    let mut out = TensorF32::zeros(out_ch, h, w);
    for oc in 0..out_ch {
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = bias[oc];
                for ic in 0..ic_n {
                    for ky in 0..3isize {
                        for kx in 0..3isize {
                            let sy = y + ky - 1;
                            let sx = x + kx - 1;
                            if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                acc += weight[(oc * ic_n + ic) * 9 + (ky * 3 + kx) as usize]
                                    * input.at(ic, sy as usize, sx as usize);
                            }
                        }
                    }
                }
                out.set(oc, y as usize, x as usize, acc);
            }
        }
    }
    out
}

fn maxpool_f32(input: &TensorF32) -> TensorF32 {
    let (c_n, h, w) = (input.channels, input.height, input.width);
    let mut out = TensorF32::zeros(c_n, h / 2, w / 2);
    for c in 0..c_n {
        for y in 0..h / 2 {
            for x in 0..w / 2 {
                let m = input
                    .at(c, 2 * y, 2 * x)
                    .max(input.at(c, 2 * y, 2 * x + 1))
                    .max(input.at(c, 2 * y + 1, 2 * x))
                    .max(input.at(c, 2 * y + 1, 2 * x + 1));
                out.set(c, y, x, m);
            }
        }
    }
    out
}

fn upconv_f32(input: &TensorF32, weight: &[f32], bias: &[f32], out_ch: usize) -> TensorF32 {
    let (ic_n, h, w) = (input.channels, input.height, input.width);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = TensorF32::zeros(out_ch, oh, ow);
    for oc in 0..out_ch {
        for y in 0..oh {
            for x in 0..ow {
                out.set(oc, y, x, bias[oc]);
            }
        }
    }
    for ic in 0..ic_n {
        for oc in 0..out_ch {
            for y in 0..h {
                for x in 0..w {
                    let v = input.at(ic, y, x);
                    for ky in 0..3usize {
                        for kx in 0..3usize {
                            let oy = 2 * y as isize - 1 + ky as isize;
                            let ox = 2 * x as isize - 1 + kx as isize;
                            if oy >= 0 && (oy as usize) < oh && ox >= 0 && (ox as usize) < ow {
                                let cur = out.at(oc, oy as usize, ox as usize);
                                out.set(
                                    oc,
                                    oy as usize,
                                    ox as usize,
                                    cur + v * weight[(ic * out_ch + oc) * 9 + ky * 3 + kx],
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn add_f32(a: &TensorF32, b: &TensorF32) -> TensorF32 {
    let mut out = a.clone();
    for (x, y) in out.data.iter_mut().zip(&b.data) {
        *x += y;
    }
    out
}

fn to_tensor_data(t: &TensorF32) -> TensorData {
    TensorData {
        shape: vec![t.channels, t.height, t.width],
        values: t.data.iter().map(|&v| v as f64).collect(),
    }
}

/// Runs the float32 reference forward pass and returns every layer
/// activation plus the rescaled saturation output, keyed exactly like an
/// exported oracle.
pub fn reference_activations(
    input: &Tensor,
    weights: &GeneratorWeights,
) -> Result<HashMap<String, TensorData>> {
    weights.validate()?;
    let m = &weights.manifest;
    let input_f32 = TensorF32 {
        channels: input.channels(),
        height: input.height(),
        width: input.width(),
        data: input.data().iter().map(|&v| v as f32).collect(),
    };
    let weight_f32 = |name: &str| -> Result<Vec<f32>> {
        Ok(weights
            .tensor(name)?
            .values
            .iter()
            .map(|&v| v as f32)
            .collect())
    };

    let mut buffers: HashMap<String, TensorF32> = HashMap::new();
    buffers.insert(INPUT_NAME.to_string(), input_f32);
    let mut out = HashMap::new();
    let mut last: Option<TensorF32> = None;

    for layer in &m.layers {
        let get = |name: &String| -> Result<&TensorF32> {
            buffers
                .get(name)
                .ok_or_else(|| Error::Manifest(format!("reference: missing buffer {name:?}")))
        };
        let mut t = match layer.kind {
            LayerOp::Conv3x3 | LayerOp::FinalConv3x3 => {
                let src = get(&layer.inputs[0])?;
                let w = weight_f32(&format!("{}.weight", layer.name))?;
                let b = weight_f32(&format!("{}.bias", layer.name))?;
                conv_f32(src, &w, &b, layer.out_ch)
            }
            LayerOp::Upconv3x3 => {
                let src = get(&layer.inputs[0])?;
                let w = weight_f32(&format!("{}.weight", layer.name))?;
                let b = weight_f32(&format!("{}.bias", layer.name))?;
                upconv_f32(src, &w, &b, layer.out_ch)
            }
            LayerOp::Maxpool2 => maxpool_f32(get(&layer.inputs[0])?),
            LayerOp::Add => {
                let a = get(&layer.inputs[0])?.clone();
                let b = get(&layer.inputs[1])?;
                add_f32(&a, b)
            }
        };
        apply_activation(&mut t, layer.activation, layer.leaky_slope as f32);
        out.insert(layer.name.clone(), to_tensor_data(&t));
        last = Some(t.clone());
        buffers.insert(layer.name.clone(), t);
    }

    let final_t = last.ok_or_else(|| Error::Manifest("empty layer list".into()))?;
    let mut sto2 = final_t.clone();
    for v in sto2.data.iter_mut() {
        *v = (*v + 1.0) / 2.0;
    }
    out.insert(STO2_NAME.to_string(), to_tensor_data(&sto2));
    out.insert(
        INPUT_NAME.to_string(),
        to_tensor_data(buffers.get(INPUT_NAME).expect("input buffer")),
    );
    Ok(out)
}

/// Packages reference activations for a fixed input as an oracle container.
pub fn export_oracle(input: &Tensor, weights: &GeneratorWeights) -> Result<ActivationOracle> {
    let tensors = reference_activations(input, weights)?;
    let mut manifest: Manifest = weights.manifest.clone();
    manifest.role = "oracle".into();
    manifest.tensors.clear();
    Ok(ActivationOracle { manifest, tensors })
}
