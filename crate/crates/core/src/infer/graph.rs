//! The generator graph: manifest schema, validation, and execution.
//!
//! The manifest is an ordered list of layer descriptors; the engine never
//! hard-codes an architecture. Weighted layers reference tensors by
//! `<layer>.weight` / `<layer>.bias` in the container's tensor table.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::layers::{add_in, conv2d_3x3_in, maxpool_2x2_in, upconv_3x3_in, Activation};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::phantom::InputTensor;
use crate::raster::{ImagePlane, StO2Map};

/// Name of the network input pseudo-buffer in `inputs` lists and oracle
/// tensor tables.
pub const INPUT_NAME: &str = "__input__";
/// Oracle tensor holding the rescaled saturation output.
pub const STO2_NAME: &str = "__sto2__";

/// Layer operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerOp {
    Conv3x3,
    Upconv3x3,
    FinalConv3x3,
    Maxpool2,
    Add,
}

impl LayerOp {
    pub fn has_weights(&self) -> bool {
        matches!(
            self,
            LayerOp::Conv3x3 | LayerOp::Upconv3x3 | LayerOp::FinalConv3x3
        )
    }
}

/// One layer descriptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerOp,
    #[serde(default)]
    pub in_ch: usize,
    #[serde(default)]
    pub out_ch: usize,
    pub activation: Activation,
    #[serde(default)]
    pub leaky_slope: f64,
    /// Encoder/decoder level this layer belongs to (0 for the output head).
    pub level: i32,
    /// Producer buffers: one entry, or two for additive skips.
    pub inputs: Vec<String>,
}

/// Entry of the container's tensor table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: usize,
}

/// Container manifest: the architecture graph plus the tensor table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    /// "generator" for weights, "oracle" for reference activations.
    pub role: String,
    pub depth: usize,
    pub input_channels: usize,
    pub output_channels: usize,
    /// Convolution zero-padding (fixed at 1 for 3x3 kernels).
    pub conv_padding: usize,
    /// Transposed-convolution output padding (fixed by the exporter's
    /// convention; 1 yields exact spatial doubling).
    pub upconv_output_padding: usize,
    /// Free-form provenance note (initialization scheme, training run id).
    pub provenance: String,
    pub layers: Vec<LayerSpec>,
    pub tensors: Vec<TensorRecord>,
}

/// A named tensor payload (values are f32-quantized on disk).
#[derive(Debug, Clone)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Generator weights: manifest plus tensor payloads.
#[derive(Debug, Clone)]
pub struct GeneratorWeights {
    pub manifest: Manifest,
    pub tensors: HashMap<String, TensorData>,
}

impl GeneratorWeights {
    pub fn tensor(&self, name: &str) -> Result<&TensorData> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Manifest(format!("missing tensor {name:?}")))
    }

    /// Structural validation of the graph and every tensor shape.
    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        if m.role != "generator" {
            return Err(Error::Manifest(format!(
                "expected role \"generator\", found {:?}",
                m.role
            )));
        }
        if m.layers.is_empty() {
            return Err(Error::Manifest("empty layer list".into()));
        }
        // Channel bookkeeping per buffer name.
        let mut channels: HashMap<&str, usize> = HashMap::new();
        channels.insert(INPUT_NAME, m.input_channels);
        for (i, layer) in m.layers.iter().enumerate() {
            if channels.contains_key(layer.name.as_str()) {
                return Err(Error::Manifest(format!(
                    "duplicate layer name {:?}",
                    layer.name
                )));
            }
            let expect_inputs = if layer.kind == LayerOp::Add { 2 } else { 1 };
            if layer.inputs.len() != expect_inputs {
                return Err(Error::Manifest(format!(
                    "layer {:?} needs {expect_inputs} inputs, has {}",
                    layer.name,
                    layer.inputs.len()
                )));
            }
            let mut in_channels = Vec::new();
            for input in &layer.inputs {
                match channels.get(input.as_str()) {
                    Some(&c) => in_channels.push(c),
                    None => {
                        return Err(Error::Manifest(format!(
                            "layer {:?} consumes unknown buffer {:?}",
                            layer.name, input
                        )))
                    }
                }
            }
            let out_channels = match layer.kind {
                LayerOp::Conv3x3 | LayerOp::FinalConv3x3 | LayerOp::Upconv3x3 => {
                    if layer.in_ch != in_channels[0] {
                        return Err(Error::Manifest(format!(
                            "layer {:?} declares {} input channels but its producer has {}",
                            layer.name, layer.in_ch, in_channels[0]
                        )));
                    }
                    if layer.out_ch == 0 {
                        return Err(Error::Manifest(format!(
                            "layer {:?} declares zero output channels",
                            layer.name
                        )));
                    }
                    self.check_weight_shapes(layer)?;
                    layer.out_ch
                }
                LayerOp::Maxpool2 => in_channels[0],
                LayerOp::Add => {
                    if in_channels[0] != in_channels[1] {
                        return Err(Error::Manifest(format!(
                            "layer {:?} adds buffers with {} and {} channels",
                            layer.name, in_channels[0], in_channels[1]
                        )));
                    }
                    in_channels[0]
                }
            };
            channels.insert(layer.name.as_str(), out_channels);

            if i == m.layers.len() - 1 {
                if layer.kind != LayerOp::FinalConv3x3 {
                    return Err(Error::Manifest(
                        "the last layer must be the final convolution".into(),
                    ));
                }
                if out_channels != m.output_channels {
                    return Err(Error::Manifest(format!(
                        "final layer emits {} channels, manifest declares {}",
                        out_channels, m.output_channels
                    )));
                }
            } else if layer.kind == LayerOp::FinalConv3x3 {
                return Err(Error::Manifest(
                    "final convolution must be the last layer".into(),
                ));
            }
        }
        Ok(())
    }

    fn check_weight_shapes(&self, layer: &LayerSpec) -> Result<()> {
        let weight = self.tensor(&format!("{}.weight", layer.name))?;
        let bias = self.tensor(&format!("{}.bias", layer.name))?;
        let expected: Vec<usize> = match layer.kind {
            // Cross-correlation weights: [out, in, kh, kw].
            LayerOp::Conv3x3 | LayerOp::FinalConv3x3 => {
                vec![layer.out_ch, layer.in_ch, 3, 3]
            }
            // Transposed-convolution weights: [in, out, kh, kw].
            LayerOp::Upconv3x3 => vec![layer.in_ch, layer.out_ch, 3, 3],
            _ => unreachable!("weightless layer"),
        };
        if weight.shape != expected {
            return Err(Error::Manifest(format!(
                "tensor {:?}.weight has shape {:?}, expected {:?}",
                layer.name, weight.shape, expected
            )));
        }
        if bias.shape != vec![layer.out_ch] {
            return Err(Error::Manifest(format!(
                "tensor {:?}.bias has shape {:?}, expected [{}]",
                layer.name, bias.shape, layer.out_ch
            )));
        }
        Ok(())
    }
}

/// Reference activations for a fixed input, exported alongside weights.
#[derive(Debug, Clone)]
pub struct ActivationOracle {
    pub manifest: Manifest,
    pub tensors: HashMap<String, TensorData>,
}

impl ActivationOracle {
    pub fn tensor(&self, name: &str) -> Result<&TensorData> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Manifest(format!("oracle is missing tensor {name:?}")))
    }

    /// The fixed input the oracle was exported for.
    pub fn input(&self) -> Result<Tensor> {
        let t = self.tensor(INPUT_NAME)?;
        if t.shape.len() != 3 {
            return Err(Error::Manifest(format!(
                "oracle input shape {:?} is not CxHxW",
                t.shape
            )));
        }
        Tensor::from_data(t.shape[0], t.shape[1], t.shape[2], t.values.clone())
    }
}

/// Executes the manifest graph on a CHW tensor, returning the final layer
/// output (post-tanh) and, when `trace` is set, every intermediate
/// activation in manifest order.
fn execute(
    input: &Tensor,
    weights: &GeneratorWeights,
    trace: bool,
) -> Result<(Tensor, Vec<(String, Tensor)>)> {
    weights.validate()?;
    let m = &weights.manifest;
    if input.channels() != m.input_channels {
        return Err(Error::Manifest(format!(
            "input has {} channels, manifest expects {}",
            input.channels(),
            m.input_channels
        )));
    }
    let divisor = 1usize << m.depth;
    if input.height() % divisor != 0 || input.width() % divisor != 0 {
        return Err(Error::InvalidArgument(format!(
            "input {}x{} is not a multiple of 2^depth = {divisor}",
            input.width(),
            input.height()
        )));
    }

    // Consumer counts drive buffer lifetime so peak memory stays at a few
    // level-sized activations.
    let mut remaining: HashMap<&str, usize> = HashMap::new();
    for layer in &m.layers {
        for i in &layer.inputs {
            *remaining.entry(i.as_str()).or_insert(0) += 1;
        }
    }

    let mut buffers: HashMap<&str, Tensor> = HashMap::new();
    buffers.insert(INPUT_NAME, input.clone());
    let mut captured = Vec::new();
    let mut last: Option<Tensor> = None;
    // Retired buffer storage is reused across layers so the allocator
    // never returns pages to the OS mid-pass (that churn serializes the
    // otherwise parallel kernels).
    let mut recycler: Vec<Vec<f64>> = Vec::new();

    for (li, layer) in m.layers.iter().enumerate() {
        let storage = recycler.pop().unwrap_or_default();
        let mut out = {
            let fetch = |name: &str| -> Result<&Tensor> {
                buffers
                    .get(name)
                    .ok_or_else(|| Error::Manifest(format!("buffer {name:?} was freed early")))
            };
            match layer.kind {
                LayerOp::Conv3x3 | LayerOp::FinalConv3x3 => {
                    let src = fetch(&layer.inputs[0])?;
                    let w = weights.tensor(&format!("{}.weight", layer.name))?;
                    let b = weights.tensor(&format!("{}.bias", layer.name))?;
                    conv2d_3x3_in(src, &w.values, &b.values, layer.out_ch, storage)?
                }
                LayerOp::Upconv3x3 => {
                    let src = fetch(&layer.inputs[0])?;
                    let w = weights.tensor(&format!("{}.weight", layer.name))?;
                    let b = weights.tensor(&format!("{}.bias", layer.name))?;
                    upconv_3x3_in(src, &w.values, &b.values, layer.out_ch, storage)?
                }
                LayerOp::Maxpool2 => {
                    let src = fetch(&layer.inputs[0])?;
                    maxpool_2x2_in(src, storage).map_err(|e| match e {
                        Error::InvalidArgument(msg) => {
                            Error::Manifest(format!("layer {:?}: {msg}", layer.name))
                        }
                        other => other,
                    })?
                }
                LayerOp::Add => add_in(
                    fetch(&layer.inputs[0])?,
                    fetch(&layer.inputs[1])?,
                    storage,
                )?,
            }
        };
        layer.activation.apply(&mut out, layer.leaky_slope);

        for name in &layer.inputs {
            if let Some(r) = remaining.get_mut(name.as_str()) {
                *r -= 1;
                if *r == 0 && !trace {
                    if let Some(freed) = buffers.remove(name.as_str()) {
                        recycler.push(freed.into_data());
                    }
                }
            }
        }
        if trace {
            captured.push((layer.name.clone(), out.clone()));
        }
        if li == m.layers.len() - 1 {
            last = Some(out);
        } else {
            buffers.insert(layer.name.as_str(), out);
        }
    }
    Ok((last.expect("non-empty layer list"), captured))
}

/// Forward pass on a raw CHW tensor; returns the post-tanh output tensor.
pub fn forward_tensor(input: &Tensor, weights: &GeneratorWeights) -> Result<Tensor> {
    Ok(execute(input, weights, false)?.0)
}

/// Forward pass that also captures every layer activation, for parity
/// checks against an exported oracle.
pub fn forward_with_trace(
    input: &Tensor,
    weights: &GeneratorWeights,
) -> Result<(Tensor, Vec<(String, Tensor)>)> {
    execute(input, weights, true)
}

/// Converts the 3-channel encoded input into a CHW tensor.
pub fn input_to_tensor(input: &InputTensor) -> Tensor {
    let [c1, c2, c3] = input.channels();
    let (w, h) = input.dims();
    let mut data = Vec::with_capacity(3 * w * h);
    data.extend_from_slice(c1.data());
    data.extend_from_slice(c2.data());
    data.extend_from_slice(c3.data());
    Tensor::from_data(3, h, w, data).expect("channel planes share dimensions")
}

/// Maps the tanh output `y` in [-1, 1] to saturation `(y + 1) / 2`.
pub fn output_to_sto2(output: &Tensor, pitch_mm: f64) -> Result<StO2Map> {
    if output.channels() != 1 {
        return Err(Error::Manifest(format!(
            "generator output has {} channels, expected 1",
            output.channels()
        )));
    }
    let data = output.data().iter().map(|&y| (y + 1.0) / 2.0).collect();
    StO2Map::new(ImagePlane::with_invalid(
        output.width(),
        output.height(),
        pitch_mm,
        data,
    )?)
}

/// End-to-end generator inference: encoded input in, saturation map out.
pub fn forward_generator(input: &InputTensor, weights: &GeneratorWeights) -> Result<StO2Map> {
    let tensor = input_to_tensor(input);
    let out = forward_tensor(&tensor, weights)?;
    let (w, h) = input.dims();
    if out.height() != h || out.width() != w {
        return Err(Error::Manifest(format!(
            "generator output is {}x{}, expected {}x{}",
            out.width(),
            out.height(),
            w,
            h
        )));
    }
    output_to_sto2(&out, input.channels()[0].pitch_mm())
}
