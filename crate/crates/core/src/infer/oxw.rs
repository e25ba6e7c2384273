//! The OXW weight container: a JSON manifest (architecture graph plus
//! tensor table) followed by one raw little-endian float32 blob. Oracle
//! containers reuse the same layout with `role = "oracle"` and activation
//! tensors instead of weights.

use std::collections::HashMap;
use std::path::Path;

use super::graph::{ActivationOracle, GeneratorWeights, Manifest, TensorData, TensorRecord};
use crate::error::{Error, Result};
use crate::io;

const OXW_MAGIC: &[u8; 4] = b"OXW1";

fn pack(manifest: &Manifest, tensors: &HashMap<String, TensorData>) -> Result<(String, Vec<u8>)> {
    let mut m = manifest.clone();
    m.tensors.clear();
    let mut blob = Vec::new();
    // Deterministic container bytes: tensors serialized in name order.
    let mut names: Vec<&String> = tensors.keys().collect();
    names.sort();
    for name in names {
        let t = &tensors[name];
        let count: usize = t.shape.iter().product();
        if count != t.values.len() {
            return Err(Error::Manifest(format!(
                "tensor {name:?} has {} values but shape {:?}",
                t.values.len(),
                t.shape
            )));
        }
        m.tensors.push(TensorRecord {
            name: name.clone(),
            shape: t.shape.clone(),
            dtype: "float32".into(),
            offset: blob.len(),
        });
        blob.extend(io::f32_bytes(&t.values));
    }
    Ok((serde_json::to_string(&m)?, blob))
}

fn unpack(header: &str, blob: &[u8]) -> Result<(Manifest, HashMap<String, TensorData>)> {
    let manifest: Manifest = serde_json::from_str(header)?;
    if manifest.format != "oxw" {
        return Err(Error::Format(format!(
            "unexpected container format {:?}",
            manifest.format
        )));
    }
    let mut tensors = HashMap::with_capacity(manifest.tensors.len());
    for rec in &manifest.tensors {
        if rec.dtype != "float32" {
            return Err(Error::Format(format!(
                "tensor {:?} has dtype {:?}; only float32 is supported",
                rec.name, rec.dtype
            )));
        }
        let count: usize = rec.shape.iter().product();
        let values = io::f32_slice(blob, rec.offset, count)?;
        tensors.insert(
            rec.name.clone(),
            TensorData {
                shape: rec.shape.clone(),
                values,
            },
        );
    }
    Ok((manifest, tensors))
}

/// Writes generator weights to an OXW container.
pub fn save_weights(path: &Path, weights: &GeneratorWeights) -> Result<()> {
    if weights.manifest.role != "generator" {
        return Err(Error::Manifest(format!(
            "cannot save role {:?} as generator weights",
            weights.manifest.role
        )));
    }
    let (header, blob) = pack(&weights.manifest, &weights.tensors)?;
    io::write_container(path, OXW_MAGIC, &header, &blob)
}

/// Reads and validates generator weights.
pub fn load_weights(path: &Path) -> Result<GeneratorWeights> {
    let (header, blob) = io::read_container(path, OXW_MAGIC)?;
    let (manifest, tensors) = unpack(&header, &blob)?;
    let weights = GeneratorWeights { manifest, tensors };
    weights.validate()?;
    Ok(weights)
}

/// Writes an activation oracle to an OXW container.
pub fn save_oracle(path: &Path, oracle: &ActivationOracle) -> Result<()> {
    if oracle.manifest.role != "oracle" {
        return Err(Error::Manifest(format!(
            "cannot save role {:?} as an oracle",
            oracle.manifest.role
        )));
    }
    let (header, blob) = pack(&oracle.manifest, &oracle.tensors)?;
    io::write_container(path, OXW_MAGIC, &header, &blob)
}

/// Reads an activation oracle.
pub fn load_oracle(path: &Path) -> Result<ActivationOracle> {
    let (header, blob) = io::read_container(path, OXW_MAGIC)?;
    let (manifest, tensors) = unpack(&header, &blob)?;
    if manifest.role != "oracle" {
        return Err(Error::Format(format!(
            "container role is {:?}, expected \"oracle\"",
            manifest.role
        )));
    }
    Ok(ActivationOracle { manifest, tensors })
}
