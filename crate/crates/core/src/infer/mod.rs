//! From-scratch CNN inference engine for the fusion generator.
//!
//! The engine executes an architecture manifest from an OXW weight
//! container; nothing about the network shape is hard-coded. Weights are
//! stored float32, the engine computes in double precision, and forward
//! passes are bit-deterministic regardless of thread count.

mod builder;
mod graph;
mod layers;
mod oxw;
pub mod reference;
mod tensor;

pub use builder::{
    fusion_manifest, synthesize_weights, WeightInit, DEFAULT_BASE_CHANNELS, DEFAULT_DEPTH,
    LEAKY_SLOPE,
};
pub use graph::{
    forward_generator, forward_tensor, forward_with_trace, input_to_tensor, output_to_sto2,
    ActivationOracle, GeneratorWeights, LayerOp, LayerSpec, Manifest, TensorData, TensorRecord,
    INPUT_NAME, STO2_NAME,
};
pub use layers::{add, conv2d_3x3, maxpool_2x2, upconv_3x3, Activation};
pub use oxw::{load_oracle, load_weights, save_oracle, save_weights};
pub use tensor::Tensor;

use crate::error::Result;
use serde::Serialize;
use std::time::Instant;

/// Wall-time measurements of repeated forward passes at one thread count.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub size: usize,
    pub threads: usize,
    pub warmup_runs: usize,
    pub timed_runs: usize,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub frames_per_second: f64,
}

/// Deterministic synthetic input for benchmarking: smooth per-channel
/// gradients in the same value range as real encoded inputs.
pub fn bench_input(channels: usize, size: usize) -> Tensor {
    let mut data = Vec::with_capacity(channels * size * size);
    for c in 0..channels {
        for y in 0..size {
            for x in 0..size {
                let v = 0.4
                    + 0.3 * ((x as f64) / size as f64)
                    + 0.2 * ((y as f64) / size as f64)
                    + 0.05 * c as f64;
                data.push(v);
            }
        }
    }
    Tensor::from_data(channels, size, size, data).expect("constructed consistently")
}

/// Times repeated forward passes of `weights` on a `size x size` input
/// using a dedicated pool of `threads` workers.
pub fn benchmark_inference(
    weights: &GeneratorWeights,
    size: usize,
    threads: usize,
    timed_runs: usize,
) -> Result<BenchReport> {
    let input = bench_input(weights.manifest.input_channels, size);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| crate::error::Error::InvalidArgument(format!("thread pool: {e}")))?;

    let warmup_runs = 1;
    pool.install(|| forward_tensor(&input, weights))?;

    let mut times = Vec::with_capacity(timed_runs);
    for _ in 0..timed_runs {
        let start = Instant::now();
        pool.install(|| forward_tensor(&input, weights))?;
        times.push(start.elapsed().as_secs_f64());
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(BenchReport {
        size,
        threads,
        warmup_runs,
        timed_runs,
        mean_seconds: mean,
        min_seconds: min,
        frames_per_second: 1.0 / mean,
    })
}
