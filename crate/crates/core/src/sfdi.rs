//! Conventional multi-phase structured-illumination pipeline: three-phase
//! demodulation, reference calibration, and lookup-table inversion into
//! per-wavelength optical-property maps.
//!
//! Demodulation uses the exact amplitude identity for three equally
//! spaced phases (0, 2pi/3, 4pi/3):
//!
//! ```text
//! M_AC = sqrt(2)/3 * sqrt((I0-I1)^2 + (I1-I2)^2 + (I2-I0)^2)
//! M_DC = (I0 + I1 + I2) / 3
//! ```
//!
//! Invalid pixels propagate: once a stage marks a pixel, later stages
//! skip it.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io;
use crate::photon::{diffuse_reflectance, GamutStats, OpticalPropertyMap, ReflectanceLut};
use crate::raster::{ImagePlane, INVALID};

const REF_MAGIC: &[u8; 4] = b"OXRF";
/// Relative tolerance when matching spatial frequencies between data and LUT.
const FX_REL_TOL: f64 = 1e-9;

/// Three structured-illumination frames at phase offsets 0, 2pi/3, 4pi/3.
#[derive(Debug, Clone)]
pub struct PhaseTriplet {
    i0: ImagePlane,
    i1: ImagePlane,
    i2: ImagePlane,
    fx: f64,
    wavelength_nm: f64,
}

impl PhaseTriplet {
    pub fn new(
        i0: ImagePlane,
        i1: ImagePlane,
        i2: ImagePlane,
        fx: f64,
        wavelength_nm: f64,
    ) -> Result<Self> {
        i0.check_same_dims(&i1, "phase triplet")?;
        i0.check_same_dims(&i2, "phase triplet")?;
        if !(fx >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "spatial frequency must be >= 0, got {fx}"
            )));
        }
        Ok(Self {
            i0,
            i1,
            i2,
            fx,
            wavelength_nm,
        })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }

    pub fn planes(&self) -> (&ImagePlane, &ImagePlane, &ImagePlane) {
        (&self.i0, &self.i1, &self.i2)
    }
}

/// Demodulated magnitudes of a reference target with known optical
/// properties, used to calibrate sample measurements.
#[derive(Debug, Clone)]
pub struct ReferenceMeasurement {
    pub m_dc_ref: ImagePlane,
    pub m_ac_ref: ImagePlane,
    pub known_mua: f64,
    pub known_musp: f64,
    pub wavelength_nm: f64,
    pub fx_ac: f64,
}

impl ReferenceMeasurement {
    pub fn new(
        m_dc_ref: ImagePlane,
        m_ac_ref: ImagePlane,
        known_mua: f64,
        known_musp: f64,
        wavelength_nm: f64,
        fx_ac: f64,
    ) -> Result<Self> {
        m_dc_ref.check_same_dims(&m_ac_ref, "reference measurement")?;
        if !(known_mua > 0.0) || !(known_musp > 0.0) {
            return Err(Error::InvalidArgument(
                "reference optical properties must be positive".into(),
            ));
        }
        Ok(Self {
            m_dc_ref,
            m_ac_ref,
            known_mua,
            known_musp,
            wavelength_nm,
            fx_ac,
        })
    }

    /// Per-pixel AC/DC magnitude ratio of the reference.
    pub fn modulation_ratio(&self) -> Result<ImagePlane> {
        let data = self
            .m_ac_ref
            .data()
            .iter()
            .zip(self.m_dc_ref.data())
            .map(|(&ac, &dc)| {
                if ac.is_finite() && dc.is_finite() && dc > 0.0 {
                    ac / dc
                } else {
                    INVALID
                }
            })
            .collect();
        ImagePlane::with_invalid(
            self.m_dc_ref.width(),
            self.m_dc_ref.height(),
            self.m_dc_ref.pitch_mm(),
            data,
        )
    }
}

/// Which demodulated band a plane belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Dc,
    Ac,
}

/// Recovers the modulated (AC) and unmodulated (DC) magnitude of a phase
/// triplet. Pixels invalid in any input frame are invalid in both outputs.
pub fn demodulate(triplet: &PhaseTriplet) -> Result<(ImagePlane, ImagePlane)> {
    let (i0, i1, i2) = triplet.planes();
    let (w, h) = i0.dims();
    let mut dc = Vec::with_capacity(w * h);
    let mut ac = Vec::with_capacity(w * h);
    let k = 2.0_f64.sqrt() / 3.0;
    for ((&a, &b), &c) in i0.data().iter().zip(i1.data()).zip(i2.data()) {
        if a.is_finite() && b.is_finite() && c.is_finite() {
            dc.push((a + b + c) / 3.0);
            ac.push(k * ((a - b).powi(2) + (b - c).powi(2) + (c - a).powi(2)).sqrt());
        } else {
            dc.push(INVALID);
            ac.push(INVALID);
        }
    }
    Ok((
        ImagePlane::with_invalid(w, h, i0.pitch_mm(), dc)?,
        ImagePlane::with_invalid(w, h, i0.pitch_mm(), ac)?,
    ))
}

/// Calibrates a demodulated sample magnitude against the reference:
/// `rd = (m_samp / m_ref) * Rd_pred(reference properties, band fx)`.
///
/// Values outside (0, 1] are flagged invalid, never clamped: silent
/// clamping would hide calibration faults.
pub fn calibrate(
    m_samp: &ImagePlane,
    reference: &ReferenceMeasurement,
    band: Band,
    lut: &ReflectanceLut,
) -> Result<ImagePlane> {
    let m_ref = match band {
        Band::Dc => &reference.m_dc_ref,
        Band::Ac => &reference.m_ac_ref,
    };
    m_samp.check_same_dims(m_ref, "calibrate")?;
    let fx = match band {
        Band::Dc => lut.fx_dc(),
        Band::Ac => {
            check_fx("reference", reference.fx_ac, lut.fx_ac())?;
            lut.fx_ac()
        }
    };
    let rd_pred = diffuse_reflectance(
        reference.known_mua,
        reference.known_musp,
        fx,
        lut.refractive_index(),
    )?;

    let (w, h) = m_samp.dims();
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let s = m_samp.get(r, c);
            let m = m_ref.get(r, c);
            if !s.is_finite() || !m.is_finite() {
                out.push(INVALID);
                continue;
            }
            if m <= 0.0 {
                return Err(Error::NonPositiveReference {
                    row: r,
                    col: c,
                    value: m,
                });
            }
            let rd = s / m * rd_pred;
            if rd > 0.0 && rd <= 1.0 {
                out.push(rd);
            } else {
                out.push(INVALID);
            }
        }
    }
    ImagePlane::with_invalid(w, h, m_samp.pitch_mm(), out)
}

fn check_fx(what: &str, data_fx: f64, lut_fx: f64) -> Result<()> {
    let tol = FX_REL_TOL * lut_fx.abs().max(1.0);
    if (data_fx - lut_fx).abs() > tol {
        let _ = what;
        return Err(Error::FrequencyMismatch {
            data_fx,
            lut_fx,
        });
    }
    Ok(())
}

/// End-to-end conventional path: demodulate both bands, calibrate each
/// against the reference, and invert the reflectance pair through the LUT.
pub fn sfdi_optical_properties(
    triplet_dc: &PhaseTriplet,
    triplet_ac: &PhaseTriplet,
    reference: &ReferenceMeasurement,
    lut: &ReflectanceLut,
) -> Result<(OpticalPropertyMap, GamutStats)> {
    if (triplet_dc.wavelength_nm() - triplet_ac.wavelength_nm()).abs() > 0.5 {
        return Err(Error::InvalidArgument(format!(
            "triplets are at different wavelengths: {} vs {} nm",
            triplet_dc.wavelength_nm(),
            triplet_ac.wavelength_nm()
        )));
    }
    check_fx("DC triplet", triplet_dc.fx(), lut.fx_dc())?;
    check_fx("AC triplet", triplet_ac.fx(), lut.fx_ac())?;

    let (m_dc, _) = demodulate(triplet_dc)?;
    let (_, m_ac) = demodulate(triplet_ac)?;
    let rd_dc = calibrate(&m_dc, reference, Band::Dc, lut)?;
    let rd_ac = calibrate(&m_ac, reference, Band::Ac, lut)?;
    crate::photon::lut_invert_map(&rd_dc, &rd_ac, lut, None, triplet_dc.wavelength_nm())
}

/// A set of reference measurements, one per wavelength, persisted as a
/// JSON header plus raw f32 planes.
#[derive(Debug, Clone, Default)]
pub struct ReferenceBundle {
    refs: Vec<ReferenceMeasurement>,
}

#[derive(Serialize, Deserialize)]
struct RefHeader {
    format: String,
    version: u32,
    refs: Vec<RefRecord>,
}

#[derive(Serialize, Deserialize)]
struct RefRecord {
    wavelength_nm: f64,
    known_mua: f64,
    known_musp: f64,
    fx_ac: f64,
    width: usize,
    height: usize,
    pitch_mm: f64,
    dc_offset: usize,
    ac_offset: usize,
}

impl ReferenceBundle {
    pub fn new(refs: Vec<ReferenceMeasurement>) -> Self {
        Self { refs }
    }

    pub fn push(&mut self, r: ReferenceMeasurement) {
        self.refs.push(r);
    }

    pub fn references(&self) -> &[ReferenceMeasurement] {
        &self.refs
    }

    pub fn for_wavelength(&self, wavelength_nm: f64) -> Result<&ReferenceMeasurement> {
        self.refs
            .iter()
            .find(|r| (r.wavelength_nm - wavelength_nm).abs() <= 0.5)
            .ok_or(Error::WavelengthNotInBasis { wavelength_nm })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut blob = Vec::new();
        let mut records = Vec::new();
        for r in &self.refs {
            let dc_offset = blob.len();
            blob.extend(io::f32_bytes(r.m_dc_ref.data()));
            let ac_offset = blob.len();
            blob.extend(io::f32_bytes(r.m_ac_ref.data()));
            records.push(RefRecord {
                wavelength_nm: r.wavelength_nm,
                known_mua: r.known_mua,
                known_musp: r.known_musp,
                fx_ac: r.fx_ac,
                width: r.m_dc_ref.width(),
                height: r.m_dc_ref.height(),
                pitch_mm: r.m_dc_ref.pitch_mm(),
                dc_offset,
                ac_offset,
            });
        }
        let header = serde_json::to_string(&RefHeader {
            format: "oxymap-ref".into(),
            version: 1,
            refs: records,
        })?;
        io::write_container(path, REF_MAGIC, &header, &blob)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, blob) = io::read_container(path, REF_MAGIC)?;
        let h: RefHeader = serde_json::from_str(&header)?;
        let mut refs = Vec::with_capacity(h.refs.len());
        for rec in h.refs {
            let count = rec.width * rec.height;
            let dc = io::f32_slice(&blob, rec.dc_offset, count)?;
            let ac = io::f32_slice(&blob, rec.ac_offset, count)?;
            refs.push(ReferenceMeasurement::new(
                ImagePlane::with_invalid(rec.width, rec.height, rec.pitch_mm, dc)?,
                ImagePlane::with_invalid(rec.width, rec.height, rec.pitch_mm, ac)?,
                rec.known_mua,
                rec.known_musp,
                rec.wavelength_nm,
                rec.fx_ac,
            )?);
        }
        Ok(Self { refs })
    }
}
