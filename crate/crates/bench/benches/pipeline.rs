//! Measurement-pipeline throughput: demodulation, Fourier-domain band
//! separation, and per-pixel lookup-table inversion.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use oxymap_bench::{bench_frame, bench_lut, bench_scene, FX, N_TISSUE};
use oxymap_core::phantom::render_structured;
use oxymap_core::photon::lut_invert_map;
use oxymap_core::sfdi::{calibrate, demodulate, Band, PhaseTriplet, ReferenceMeasurement};
use oxymap_core::ssop::{ssop_demodulate, SsopFilterSpec};
use oxymap_core::ImagePlane;

fn three_phase(c: &mut Criterion) {
    let scene = bench_scene(256);
    let frames: Vec<ImagePlane> = (0..3)
        .map(|k| {
            render_structured(
                &scene,
                659.0,
                FX,
                2.0 * std::f64::consts::PI * k as f64 / 3.0,
                0.0,
                N_TISSUE,
            )
            .unwrap()
        })
        .collect();
    let triplet = PhaseTriplet::new(
        frames[0].clone(),
        frames[1].clone(),
        frames[2].clone(),
        FX,
        659.0,
    )
    .unwrap();
    let mut group = c.benchmark_group("demodulate");
    group.throughput(Throughput::Elements((256 * 256) as u64));
    group.bench_function("three_phase 256x256", |b| {
        b.iter(|| demodulate(&triplet).unwrap())
    });
    group.finish();
}

fn fourier_band_separation(c: &mut Criterion) {
    let mut group = c.benchmark_group("ssop_demodulate");
    for size in [256usize, 512] {
        let scene = bench_scene(size);
        let frame = bench_frame(&scene);
        let spec = SsopFilterSpec::new(FX).unwrap();
        group.throughput(Throughput::Elements((size * size) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(size), &frame, |b, frame| {
            b.iter(|| ssop_demodulate(frame, &spec).unwrap())
        });
    }
    group.finish();
}

fn lut_inversion(c: &mut Criterion) {
    let lut = bench_lut(256);
    let scene = bench_scene(256);
    let frame = bench_frame(&scene);
    let spec = SsopFilterSpec::new(FX).unwrap();
    let demod = ssop_demodulate(&frame, &spec).unwrap();
    let reference = ReferenceMeasurement::new(
        ImagePlane::filled(256, 256, scene.pitch_mm(), 0.55).unwrap(),
        ImagePlane::filled(256, 256, scene.pitch_mm(), 0.25).unwrap(),
        0.018,
        1.1,
        659.0,
        FX,
    )
    .unwrap();
    let rd_dc = calibrate(&demod.m_dc, &reference, Band::Dc, &lut).unwrap();
    let rd_ac = calibrate(&demod.m_ac, &reference, Band::Ac, &lut).unwrap();
    let mut group = c.benchmark_group("lut_invert_map");
    group.throughput(Throughput::Elements((256 * 256) as u64));
    group.bench_function("256x256", |b| {
        b.iter(|| lut_invert_map(&rd_dc, &rd_ac, &lut, None, 659.0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, three_phase, fourier_band_separation, lut_inversion);
criterion_main!(benches);
