//! File formats.
//!
//! Rasters are stored as raw little-endian scalars in row-major order with
//! a JSON sidecar at `<path>.json` describing geometry:
//!
//! ```json
//! {"width":256,"height":256,"channels":1,"pitch_mm":0.5,"semantic":"sto2"}
//! ```
//!
//! Float planes use 32-bit samples; masks use one byte per pixel (0/1) and
//! are identified by `semantic == "mask"`. Multi-channel files store whole
//! planes back to back (planar layout).
//!
//! Binary bundles (LUTs, reference measurements, weight containers) share
//! one container layout: a 4-byte magic, a little-endian u64 header length,
//! a JSON header, and a raw payload blob.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ImagePlane, Mask};

/// Geometry and meaning of a raster file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Sidecar {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pitch_mm: f64,
    pub semantic: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".json");
    PathBuf::from(name)
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(sidecar_path(path))?;
    let sc: Sidecar = serde_json::from_str(&text)?;
    if sc.width == 0 || sc.height == 0 || sc.channels == 0 {
        return Err(Error::Format(format!(
            "sidecar for {} declares a zero dimension",
            path.display()
        )));
    }
    Ok(sc)
}

fn write_sidecar(path: &Path, sc: &Sidecar) -> Result<()> {
    fs::write(sidecar_path(path), serde_json::to_string(sc)?)?;
    Ok(())
}

/// Serializes planes as little-endian f32 samples, one full plane per channel.
pub fn write_planes(path: &Path, planes: &[&ImagePlane], semantic: &str) -> Result<()> {
    let first = planes
        .first()
        .ok_or_else(|| Error::InvalidArgument("no planes to write".into()))?;
    let mut bytes = Vec::with_capacity(planes.len() * first.data().len() * 4);
    for plane in planes {
        first.check_same_dims(plane, "write_planes")?;
        for &v in plane.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    write_sidecar(
        path,
        &Sidecar {
            width: first.width(),
            height: first.height(),
            channels: planes.len(),
            pitch_mm: first.pitch_mm(),
            semantic: semantic.to_string(),
        },
    )
}

pub fn write_plane(path: &Path, plane: &ImagePlane, semantic: &str) -> Result<()> {
    write_planes(path, &[plane], semantic)
}

/// Reads every channel of a raster file.
pub fn read_planes(path: &Path) -> Result<(Vec<ImagePlane>, Sidecar)> {
    let sc = read_sidecar(path)?;
    if sc.semantic == "mask" {
        return Err(Error::Format(format!(
            "{} is a mask raster; use read_mask",
            path.display()
        )));
    }
    let bytes = fs::read(path)?;
    let per_plane = sc.width * sc.height;
    if bytes.len() != per_plane * sc.channels * 4 {
        return Err(Error::Format(format!(
            "{}: expected {} bytes for {}x{}x{} f32, found {}",
            path.display(),
            per_plane * sc.channels * 4,
            sc.width,
            sc.height,
            sc.channels,
            bytes.len()
        )));
    }
    let mut planes = Vec::with_capacity(sc.channels);
    for ch in 0..sc.channels {
        let mut data = Vec::with_capacity(per_plane);
        let base = ch * per_plane * 4;
        for i in 0..per_plane {
            let off = base + i * 4;
            let v = f32::from_le_bytes([
                bytes[off],
                bytes[off + 1],
                bytes[off + 2],
                bytes[off + 3],
            ]);
            data.push(v as f64);
        }
        planes.push(ImagePlane::with_invalid(
            sc.width, sc.height, sc.pitch_mm, data,
        )?);
    }
    Ok((planes, sc))
}

/// Reads a single-channel raster.
pub fn read_plane(path: &Path) -> Result<(ImagePlane, Sidecar)> {
    let (mut planes, sc) = read_planes(path)?;
    if planes.len() != 1 {
        return Err(Error::Format(format!(
            "{} holds {} channels, expected 1",
            path.display(),
            planes.len()
        )));
    }
    Ok((planes.pop().unwrap(), sc))
}

/// Writes a mask as one 0/1 byte per pixel with `semantic = "mask"`.
pub fn write_mask(path: &Path, mask: &Mask, pitch_mm: f64) -> Result<()> {
    let bytes: Vec<u8> = mask.bits().iter().map(|&b| b as u8).collect();
    fs::write(path, bytes)?;
    write_sidecar(
        path,
        &Sidecar {
            width: mask.width(),
            height: mask.height(),
            channels: 1,
            pitch_mm,
            semantic: "mask".to_string(),
        },
    )
}

pub fn read_mask(path: &Path) -> Result<(Mask, Sidecar)> {
    let sc = read_sidecar(path)?;
    if sc.semantic != "mask" {
        return Err(Error::Format(format!(
            "{} has semantic {:?}, expected \"mask\"",
            path.display(),
            sc.semantic
        )));
    }
    let bytes = fs::read(path)?;
    if bytes.len() != sc.width * sc.height {
        return Err(Error::Format(format!(
            "{}: expected {} mask bytes, found {}",
            path.display(),
            sc.width * sc.height,
            bytes.len()
        )));
    }
    let bits = bytes.iter().map(|&b| b != 0).collect();
    Ok((Mask::new(sc.width, sc.height, bits)?, sc))
}

/// Writes a `magic + header + blob` container.
pub fn write_container(path: &Path, magic: &[u8; 4], header_json: &str, blob: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(magic)?;
    file.write_all(&(header_json.len() as u64).to_le_bytes())?;
    file.write_all(header_json.as_bytes())?;
    file.write_all(&(blob.len() as u64).to_le_bytes())?;
    file.write_all(blob)?;
    Ok(())
}

/// Reads a container written by [`write_container`], checking its magic.
pub fn read_container(path: &Path, magic: &[u8; 4]) -> Result<(String, Vec<u8>)> {
    let mut file = fs::File::open(path)?;
    let mut got_magic = [0u8; 4];
    file.read_exact(&mut got_magic)?;
    if &got_magic != magic {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected {:?}",
            path.display(),
            got_magic,
            magic
        )));
    }
    let mut len8 = [0u8; 8];
    file.read_exact(&mut len8)?;
    let header_len = u64::from_le_bytes(len8) as usize;
    let mut header = vec![0u8; header_len];
    file.read_exact(&mut header)?;
    let header = String::from_utf8(header)
        .map_err(|_| Error::Format(format!("{}: header is not UTF-8", path.display())))?;
    file.read_exact(&mut len8)?;
    let blob_len = u64::from_le_bytes(len8) as usize;
    let mut blob = vec![0u8; blob_len];
    file.read_exact(&mut blob)?;
    Ok((header, blob))
}

/// Converts a f64 slice to packed little-endian f32 bytes.
pub fn f32_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Reads `count` little-endian f32 values starting at `offset` bytes.
pub fn f32_slice(blob: &[u8], offset: usize, count: usize) -> Result<Vec<f64>> {
    let end = offset + count * 4;
    if end > blob.len() {
        return Err(Error::Format(format!(
            "blob read of {count} f32 at offset {offset} exceeds blob length {}",
            blob.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let off = offset + i * 4;
        out.push(f32::from_le_bytes([
            blob[off],
            blob[off + 1],
            blob[off + 2],
            blob[off + 3],
        ]) as f64);
    }
    Ok(out)
}
