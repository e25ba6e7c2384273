//! Layer kernels: 3x3 convolution, 2x2 max pooling, and 3x3 stride-2
//! transposed convolution.
//!
//! Every output element is written by exactly one task and accumulated in
//! a fixed sequential order, so results are bit-identical regardless of
//! how many worker threads run the loops.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Pointwise nonlinearity applied after a weighted layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    LeakyRelu,
    Tanh,
}

const PAR_CHUNK: usize = 1 << 14;

/// Largest power-of-two row band (at most 16) dividing the plane height.
fn band_rows(h: usize) -> usize {
    let mut band = 16;
    while band > 1 && h % band != 0 {
        band /= 2;
    }
    band
}

impl Activation {
    pub fn apply(&self, t: &mut Tensor, leaky_slope: f64) {
        if matches!(self, Activation::None) {
            return;
        }
        let act = *self;
        t.data_mut()
            .par_chunks_mut(PAR_CHUNK)
            .for_each(|chunk| match act {
                Activation::None => {}
                Activation::Relu => {
                    for v in chunk {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                Activation::LeakyRelu => {
                    for v in chunk {
                        if *v < 0.0 {
                            *v *= leaky_slope;
                        }
                    }
                }
                Activation::Tanh => {
                    for v in chunk {
                        *v = v.tanh();
                    }
                }
            });
    }
}

/// 3x3 cross-correlation with zero padding and stride 1; spatial size is
/// preserved. `kernel` is `[out_ch, in_ch, 3, 3]` row-major, `bias` one
/// value per output channel.
pub fn conv2d_3x3(input: &Tensor, kernel: &[f64], bias: &[f64], out_ch: usize) -> Result<Tensor> {
    conv2d_3x3_in(input, kernel, bias, out_ch, Vec::new())
}

/// [`conv2d_3x3`] writing into recycled storage.
pub(crate) fn conv2d_3x3_in(
    input: &Tensor,
    kernel: &[f64],
    bias: &[f64],
    out_ch: usize,
    storage: Vec<f64>,
) -> Result<Tensor> {
    let (in_ch, h, w) = input.shape();
    if kernel.len() != out_ch * in_ch * 9 {
        return Err(Error::InvalidArgument(format!(
            "conv kernel length {} does not match {}x{}x3x3",
            kernel.len(),
            out_ch,
            in_ch
        )));
    }
    if bias.len() != out_ch {
        return Err(Error::InvalidArgument(format!(
            "conv bias length {} does not match {out_ch} output channels",
            bias.len()
        )));
    }
    // One flat task per (output channel, row band). Bands divide the
    // plane height exactly, so chunking the whole output yields uniform
    // tasks that never straddle channel planes. Each output row is
    // accumulated in a local buffer over all taps, so the output is
    // written exactly once and input rows stay cache-hot.
    let band = band_rows(h);
    let bands_per_plane = h / band;
    let mut out = storage;
    out.clear();
    out.resize(out_ch * h * w, 0.0);
    out.par_chunks_mut(band * w)
        .enumerate()
        .for_each(|(task, rows)| {
            let oc = task / bands_per_plane;
            let y0 = (task % bands_per_plane) * band;
            let mut acc = vec![0.0f64; w];
            for (dy, out_row) in rows.chunks_mut(w).enumerate() {
                let y = y0 + dy;
                acc.iter_mut().for_each(|v| *v = bias[oc]);
                for ic in 0..in_ch {
                    let in_plane = input.plane(ic);
                    let kbase = (oc * in_ch + ic) * 9;
                    for ky in 0..3usize {
                        if y + ky < 1 || y + ky > h {
                            continue;
                        }
                        let sy = y + ky - 1;
                        let in_row = &in_plane[sy * w..sy * w + w];
                        let k0 = kernel[kbase + ky * 3];
                        let k1 = kernel[kbase + ky * 3 + 1];
                        let k2 = kernel[kbase + ky * 3 + 2];
                        acc[0] += k1 * in_row[0];
                        if w > 1 {
                            acc[0] += k2 * in_row[1];
                            acc[w - 1] += k0 * in_row[w - 2] + k1 * in_row[w - 1];
                        }
                        for x in 1..w.saturating_sub(1) {
                            acc[x] += k0 * in_row[x - 1] + k1 * in_row[x] + k2 * in_row[x + 1];
                        }
                    }
                }
                out_row.copy_from_slice(&acc);
            }
        });
    Tensor::from_data(out_ch, h, w, out)
}

/// 2x2 max pooling with stride 2. Spatial dimensions must be even.
pub fn maxpool_2x2(input: &Tensor) -> Result<Tensor> {
    maxpool_2x2_in(input, Vec::new())
}

pub(crate) fn maxpool_2x2_in(input: &Tensor, storage: Vec<f64>) -> Result<Tensor> {
    let (c, h, w) = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "maxpool needs even spatial dimensions, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = storage;
    out.clear();
    out.resize(c * oh * ow, 0.0);
    out.par_chunks_mut(oh * ow).enumerate().for_each(|(ch, plane)| {
        let ip = input.plane(ch);
        for y in 0..oh {
            for x in 0..ow {
                let a = ip[(2 * y) * w + 2 * x];
                let b = ip[(2 * y) * w + 2 * x + 1];
                let cc = ip[(2 * y + 1) * w + 2 * x];
                let d = ip[(2 * y + 1) * w + 2 * x + 1];
                plane[y * ow + x] = a.max(b).max(cc).max(d);
            }
        }
    });
    Tensor::from_data(c, oh, ow, out)
}

/// 3x3 transposed convolution with stride 2, padding 1 and output padding
/// 1, doubling each spatial dimension exactly. `kernel` is
/// `[in_ch, out_ch, 3, 3]` row-major (the exporting framework's layout for
/// transposed convolutions).
pub fn upconv_3x3(input: &Tensor, kernel: &[f64], bias: &[f64], out_ch: usize) -> Result<Tensor> {
    upconv_3x3_in(input, kernel, bias, out_ch, Vec::new())
}

/// [`upconv_3x3`] writing into recycled storage.
pub(crate) fn upconv_3x3_in(
    input: &Tensor,
    kernel: &[f64],
    bias: &[f64],
    out_ch: usize,
    storage: Vec<f64>,
) -> Result<Tensor> {
    let (in_ch, h, w) = input.shape();
    if kernel.len() != in_ch * out_ch * 9 {
        return Err(Error::InvalidArgument(format!(
            "upconv kernel length {} does not match {}x{}x3x3",
            kernel.len(),
            in_ch,
            out_ch
        )));
    }
    if bias.len() != out_ch {
        return Err(Error::InvalidArgument(format!(
            "upconv bias length {} does not match {out_ch} output channels",
            bias.len()
        )));
    }
    // Gather form of the scatter `out[2y-1+ky][2x-1+kx] += in[y][x] * k`.
    // Tap parity fixes the contributing kernel column per output column:
    // even columns take kx = 1 from in[x/2], odd columns take kx = 2 from
    // in[(x-1)/2] and kx = 0 from in[(x+1)/2]; rows behave identically.
    let (oh, ow) = (2 * h, 2 * w);
    let band = band_rows(oh);
    let bands_per_plane = oh / band;
    let mut out = storage;
    out.clear();
    out.resize(out_ch * oh * ow, 0.0);
    out.par_chunks_mut(band * ow)
        .enumerate()
        .for_each(|(task, rows)| {
            let oc = task / bands_per_plane;
            let y0 = (task % bands_per_plane) * band;
            for (dy, out_row) in rows.chunks_mut(ow).enumerate() {
                let oy = y0 + dy;
                out_row.iter_mut().for_each(|v| *v = bias[oc]);
                for ic in 0..in_ch {
                    let ip = input.plane(ic);
                    let kbase = (ic * out_ch + oc) * 9;
                    for ky in 0..3usize {
                        if (oy + 1).wrapping_sub(ky) % 2 != 0 {
                            continue;
                        }
                        let iy = (oy + 1 - ky) / 2;
                        if iy >= h {
                            continue;
                        }
                        let in_row = &ip[iy * w..iy * w + w];
                        let k0 = kernel[kbase + ky * 3];
                        let k1 = kernel[kbase + ky * 3 + 1];
                        let k2 = kernel[kbase + ky * 3 + 2];
                        // Even output columns.
                        for ix in 0..w {
                            out_row[2 * ix] += k1 * in_row[ix];
                        }
                        // Odd output columns.
                        for ix in 0..w {
                            out_row[2 * ix + 1] += k2 * in_row[ix];
                        }
                        for ix in 1..w {
                            out_row[2 * ix - 1] += k0 * in_row[ix];
                        }
                    }
                }
            }
        });
    Tensor::from_data(out_ch, oh, ow, out)
}

/// Elementwise sum of two equally shaped tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    add_in(a, b, Vec::new())
}

pub(crate) fn add_in(a: &Tensor, b: &Tensor, storage: Vec<f64>) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::InvalidArgument(format!(
            "add shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = storage;
    data.clear();
    data.resize(a.data().len(), 0.0);
    data.par_chunks_mut(PAR_CHUNK)
        .zip(a.data().par_chunks(PAR_CHUNK))
        .zip(b.data().par_chunks(PAR_CHUNK))
        .for_each(|((out, x), y)| {
            for i in 0..out.len() {
                out[i] = x[i] + y[i];
            }
        });
    Tensor::from_data(a.channels(), a.height(), a.width(), data)
}
