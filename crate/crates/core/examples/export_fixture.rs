//! Regenerates the committed weight/oracle fixture pair under
//! `crates/core/fixtures/`.
//!
//! The weights are a seeded synthetic fusion generator (depth 3, base
//! width 8). The oracle holds the float32 reference-path activations for
//! a fixed 32x32 input, exactly as a trainer-side export would. Both
//! files are deterministic; run this only when the container format or
//! the fixture architecture changes.
//!
//! Usage: cargo run -p oxymap-core --example export_fixture

use oxymap_core::infer::{
    bench_input, fusion_manifest, reference, save_oracle, save_weights, synthesize_weights,
    WeightInit,
};
use std::path::PathBuf;

fn main() {
    let manifest = fusion_manifest(3, 8, 3, 1).expect("manifest");
    let weights = synthesize_weights(manifest, WeightInit::HeNormal, 0x0758_c0de);
    let input = bench_input(3, 32);
    let oracle = reference::export_oracle(&input, &weights).expect("oracle export");

    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir).expect("fixtures dir");
    let wpath = dir.join("generator.oxw");
    let opath = dir.join("oracle.oxw");
    save_weights(&wpath, &weights).expect("write weights");
    save_oracle(&opath, &oracle).expect("write oracle");
    println!(
        "wrote {} ({} bytes) and {} ({} bytes)",
        wpath.display(),
        std::fs::metadata(&wpath).unwrap().len(),
        opath.display(),
        std::fs::metadata(&opath).unwrap().len()
    );
}
