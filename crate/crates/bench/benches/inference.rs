//! Neural-engine throughput: layer kernels and whole forward passes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use oxymap_bench::{fixture_weights, full_width_weights};
use oxymap_core::infer::{bench_input, conv2d_3x3, forward_tensor, maxpool_2x2, Tensor};

fn conv_kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d_3x3");
    for (ic, oc, size) in [(8usize, 8usize, 256usize), (64, 64, 128), (256, 256, 32)] {
        let input = Tensor::from_data(
            ic,
            size,
            size,
            (0..ic * size * size)
                .map(|i| (i % 83) as f64 * 0.01)
                .collect(),
        )
        .unwrap();
        let kernel: Vec<f64> = (0..oc * ic * 9)
            .map(|i| ((i % 17) as f64 - 8.0) * 0.01)
            .collect();
        let bias = vec![0.05; oc];
        let flops = (2 * oc * ic * 9 * size * size) as u64;
        group.throughput(Throughput::Elements(flops));
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{ic}x{oc}@{size}")),
            &input,
            |b, input| b.iter(|| conv2d_3x3(input, &kernel, &bias, oc).unwrap()),
        );
    }
    group.finish();
}

fn pooling(c: &mut Criterion) {
    let input = Tensor::from_data(
        64,
        256,
        256,
        (0..64 * 256 * 256).map(|i| (i % 29) as f64).collect(),
    )
    .unwrap();
    c.bench_function("maxpool_2x2 64x256x256", |b| {
        b.iter(|| maxpool_2x2(&input).unwrap())
    });
}

fn forward_passes(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_generator");
    group.sample_size(10);
    let fixture = fixture_weights();
    for size in [128usize, 256] {
        let input = bench_input(3, size);
        group.bench_with_input(
            BenchmarkId::new("depth3_base8", size),
            &input,
            |b, input| b.iter(|| forward_tensor(input, &fixture).unwrap()),
        );
    }
    let full = full_width_weights();
    let input = bench_input(3, 128);
    group.bench_with_input(
        BenchmarkId::new("depth4_base64", 128),
        &input,
        |b, input| b.iter(|| forward_tensor(input, &full).unwrap()),
    );
    group.finish();
}

criterion_group!(benches, conv_kernels, pooling, forward_passes);
criterion_main!(benches);
