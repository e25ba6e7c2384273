//! Forward model for spatially modulated diffuse reflectance and the
//! lookup-table inversion from a reflectance pair back to optical
//! properties.
//!
//! The forward model is the diffusion-approximation closed form used
//! throughout the structured-illumination literature: with transport
//! coefficient `mutr = mua + musp`, reduced albedo `a' = musp / mutr`
//! and `mu_eff' = sqrt(3 mua mutr + (2 pi fx)^2)`,
//!
//! ```text
//! Rd(fx) = 3 A a' / ((mu_eff'/mutr + 1) (mu_eff'/mutr + 3 A))
//! ```
//!
//! where `A` is the effective reflection parameter for the tissue/air
//! index mismatch. The model sits behind [`ForwardModel`] so a simulated
//! photon-transport table can replace it without touching the inversion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io;
use crate::raster::{ImagePlane, Mask, INVALID};

/// Default absorption grid, mm^-1 (log-spaced).
pub const DEFAULT_MUA_RANGE: (f64, f64) = (0.001, 0.5);
/// Default reduced-scattering grid, mm^-1 (log-spaced).
pub const DEFAULT_MUSP_RANGE: (f64, f64) = (0.1, 5.0);
/// Default nodes per grid axis.
pub const DEFAULT_GRID_SIZE: usize = 256;
/// Default AC spatial frequency, mm^-1.
pub const DEFAULT_FX_AC: f64 = 0.2;
/// Default tissue refractive index.
pub const DEFAULT_REFRACTIVE_INDEX: f64 = 1.4;

const LUT_MAGIC: &[u8; 4] = b"OXLT";
const MODEL_ID: &str = "diffusion-approximation-v1";

/// Effective reflection parameter `A` from the cubic polynomial fit of the
/// effective reflectance in the refractive index.
pub fn effective_reflection_param(n: f64) -> Result<f64> {
    if !(n > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "refractive index must exceed 1, got {n}"
        )));
    }
    let r_eff = 0.0636 * n + 0.668 + 0.710 / n - 1.440 / (n * n);
    Ok((1.0 - r_eff) / (2.0 * (1.0 + r_eff)))
}

/// Diffuse reflectance at spatial frequency `fx` for one optical-property
/// pair. `mua = 0` is permitted as the zero-absorption limiting case.
pub fn diffuse_reflectance(mua: f64, musp: f64, fx: f64, n: f64) -> Result<f64> {
    if !(mua >= 0.0) || !mua.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "absorption coefficient must be >= 0, got {mua}"
        )));
    }
    if !(musp > 0.0) || !musp.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "reduced scattering coefficient must be > 0, got {musp}"
        )));
    }
    if !(fx >= 0.0) || !fx.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "spatial frequency must be >= 0, got {fx}"
        )));
    }
    let three_a = 3.0 * effective_reflection_param(n)?;
    let mutr = mua + musp;
    let a_prime = musp / mutr;
    let mu_eff = (3.0 * mua * mutr + (2.0 * PI * fx).powi(2)).sqrt();
    let ratio = mu_eff / mutr;
    Ok(three_a * a_prime / ((ratio + 1.0) * (ratio + three_a)))
}

/// A forward reflectance model usable for LUT construction and calibration.
pub trait ForwardModel: Sync {
    fn reflectance(&self, mua: f64, musp: f64, fx: f64) -> Result<f64>;
    fn refractive_index(&self) -> f64;
    fn id(&self) -> &str;
}

/// The diffusion-approximation closed form at a fixed refractive index.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    n: f64,
}

impl DiffusionModel {
    pub fn new(n: f64) -> Result<Self> {
        effective_reflection_param(n)?;
        Ok(Self { n })
    }
}

impl ForwardModel for DiffusionModel {
    fn reflectance(&self, mua: f64, musp: f64, fx: f64) -> Result<f64> {
        diffuse_reflectance(mua, musp, fx, self.n)
    }

    fn refractive_index(&self) -> f64 {
        self.n
    }

    fn id(&self) -> &str {
        MODEL_ID
    }
}

/// Per-pixel absorption and reduced scattering at one wavelength.
/// Invalid pixels carry the NaN sentinel in both planes.
#[derive(Debug, Clone)]
pub struct OpticalPropertyMap {
    mua: ImagePlane,
    musp: ImagePlane,
    wavelength_nm: f64,
}

impl OpticalPropertyMap {
    pub fn new(mua: ImagePlane, musp: ImagePlane, wavelength_nm: f64) -> Result<Self> {
        mua.check_same_dims(&musp, "optical property map")?;
        if !(wavelength_nm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "wavelength must be positive, got {wavelength_nm}"
            )));
        }
        for (&a, &s) in mua.data().iter().zip(musp.data()) {
            if a.is_finite() != s.is_finite() {
                return Err(Error::InvalidPlane(
                    "mua and musp must be invalid at the same pixels".into(),
                ));
            }
            if a.is_finite() && (a <= 0.0 || s <= 0.0) {
                return Err(Error::InvalidPlane(format!(
                    "non-positive optical properties ({a}, {s}) at a valid pixel"
                )));
            }
        }
        Ok(Self {
            mua,
            musp,
            wavelength_nm,
        })
    }

    pub fn mua(&self) -> &ImagePlane {
        &self.mua
    }

    pub fn musp(&self) -> &ImagePlane {
        &self.musp
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mua.dims()
    }
}

/// Outcome counters for a per-pixel map inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GamutStats {
    pub total: usize,
    pub inverted: usize,
    pub out_of_gamut: usize,
    pub invalid_input: usize,
}

impl GamutStats {
    pub fn out_of_gamut_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.out_of_gamut as f64 / self.total as f64
        }
    }
}

/// One triangle of the forward grid mapped into reflectance space.
#[derive(Debug, Clone, Copy)]
struct Triangle {
    dc: [f64; 3],
    ac: [f64; 3],
    mua: [f64; 3],
    musp: [f64; 3],
}

impl Triangle {
    /// Barycentric coordinates of `(dc, ac)`, or None for a degenerate
    /// triangle.
    fn barycentric(&self, dc: f64, ac: f64) -> Option<(f64, f64, f64)> {
        let (x1, x2, x3) = (self.dc[0], self.dc[1], self.dc[2]);
        let (y1, y2, y3) = (self.ac[0], self.ac[1], self.ac[2]);
        let det = (y2 - y3) * (x1 - x3) + (x3 - x2) * (y1 - y3);
        if det == 0.0 {
            return None;
        }
        let l1 = ((y2 - y3) * (dc - x3) + (x3 - x2) * (ac - y3)) / det;
        let l2 = ((y3 - y1) * (dc - x3) + (x1 - x3) * (ac - y3)) / det;
        Some((l1, l2, 1.0 - l1 - l2))
    }
}

/// Spatial index over the triangulated forward grid: a uniform bucket grid
/// in reflectance space, each bucket listing the triangles whose bounding
/// box overlaps it. Queries touch a handful of triangles, keeping the
/// per-pixel inversion O(1) after construction.
#[derive(Debug, Clone)]
struct InverseIndex {
    dc_min: f64,
    dc_max: f64,
    ac_min: f64,
    ac_max: f64,
    buckets_per_axis: usize,
    buckets: Vec<Vec<u32>>,
    triangles: Vec<Triangle>,
}

const BARYCENTRIC_SLACK: f64 = 1e-9;

impl InverseIndex {
    fn build(lut: &ReflectanceLut) -> Self {
        let nm = lut.mua_grid.len();
        let ns = lut.musp_grid.len();
        let at = |i: usize, j: usize| (lut.rd_dc[i * ns + j], lut.rd_ac[i * ns + j]);

        let mut triangles = Vec::with_capacity(2 * (nm - 1) * (ns - 1));
        for i in 0..nm - 1 {
            for j in 0..ns - 1 {
                let (d00, a00) = at(i, j);
                let (d10, a10) = at(i + 1, j);
                let (d01, a01) = at(i, j + 1);
                let (d11, a11) = at(i + 1, j + 1);
                let (m0, m1) = (lut.mua_grid[i], lut.mua_grid[i + 1]);
                let (s0, s1) = (lut.musp_grid[j], lut.musp_grid[j + 1]);
                triangles.push(Triangle {
                    dc: [d00, d10, d11],
                    ac: [a00, a10, a11],
                    mua: [m0, m1, m1],
                    musp: [s0, s0, s1],
                });
                triangles.push(Triangle {
                    dc: [d00, d11, d01],
                    ac: [a00, a11, a01],
                    mua: [m0, m1, m0],
                    musp: [s0, s1, s1],
                });
            }
        }

        let dc_min = lut.rd_dc.iter().cloned().fold(f64::INFINITY, f64::min);
        let dc_max = lut.rd_dc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ac_min = lut.rd_ac.iter().cloned().fold(f64::INFINITY, f64::min);
        let ac_max = lut.rd_ac.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        let buckets_per_axis = 256;
        let mut buckets = vec![Vec::new(); buckets_per_axis * buckets_per_axis];
        let bucket_of = |v: f64, lo: f64, hi: f64| -> usize {
            if hi <= lo {
                return 0;
            }
            let t = ((v - lo) / (hi - lo) * buckets_per_axis as f64).floor();
            (t as isize).clamp(0, buckets_per_axis as isize - 1) as usize
        };
        for (id, t) in triangles.iter().enumerate() {
            let tdc_min = t.dc.iter().cloned().fold(f64::INFINITY, f64::min);
            let tdc_max = t.dc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let tac_min = t.ac.iter().cloned().fold(f64::INFINITY, f64::min);
            let tac_max = t.ac.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let bx0 = bucket_of(tdc_min, dc_min, dc_max);
            let bx1 = bucket_of(tdc_max, dc_min, dc_max);
            let by0 = bucket_of(tac_min, ac_min, ac_max);
            let by1 = bucket_of(tac_max, ac_min, ac_max);
            for by in by0..=by1 {
                for bx in bx0..=bx1 {
                    buckets[by * buckets_per_axis + bx].push(id as u32);
                }
            }
        }

        Self {
            dc_min,
            dc_max,
            ac_min,
            ac_max,
            buckets_per_axis,
            buckets,
            triangles,
        }
    }

    /// Inverts one reflectance pair, or None when no triangle contains it.
    /// Overlapping coverage is resolved toward the smallest mua (then the
    /// smallest musp), independent of triangle order.
    fn query(&self, dc: f64, ac: f64) -> Option<(f64, f64)> {
        if !dc.is_finite() || !ac.is_finite() {
            return None;
        }
        if dc < self.dc_min || dc > self.dc_max || ac < self.ac_min || ac > self.ac_max {
            return None;
        }
        let n = self.buckets_per_axis;
        let bucket_of = |v: f64, lo: f64, hi: f64| -> usize {
            let t = ((v - lo) / (hi - lo) * n as f64).floor();
            (t as isize).clamp(0, n as isize - 1) as usize
        };
        let bx = bucket_of(dc, self.dc_min, self.dc_max);
        let by = bucket_of(ac, self.ac_min, self.ac_max);

        let mut best: Option<(f64, f64)> = None;
        for &tid in &self.buckets[by * n + bx] {
            let t = &self.triangles[tid as usize];
            // Node queries must round-trip exactly.
            for k in 0..3 {
                if dc == t.dc[k] && ac == t.ac[k] {
                    let cand = (t.mua[k], t.musp[k]);
                    best = Some(match best {
                        Some(b) if b <= cand => b,
                        _ => cand,
                    });
                }
            }
            if let Some((l1, l2, l3)) = t.barycentric(dc, ac) {
                if l1 >= -BARYCENTRIC_SLACK && l2 >= -BARYCENTRIC_SLACK && l3 >= -BARYCENTRIC_SLACK
                {
                    let mua = l1 * t.mua[0] + l2 * t.mua[1] + l3 * t.mua[2];
                    let musp = l1 * t.musp[0] + l2 * t.musp[1] + l3 * t.musp[2];
                    let cand = (mua, musp);
                    best = Some(match best {
                        Some(b) if b <= cand => b,
                        _ => cand,
                    });
                }
            }
        }
        best
    }

    /// Nearest grid-node reflectance pair, for out-of-gamut diagnostics.
    fn nearest_node(&self, dc: f64, ac: f64) -> ((f64, f64), f64) {
        let mut best = (0.0, 0.0);
        let mut best_d2 = f64::INFINITY;
        for t in &self.triangles {
            for k in 0..3 {
                let d2 = (t.dc[k] - dc).powi(2) + (t.ac[k] - ac).powi(2);
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = (t.dc[k], t.ac[k]);
                }
            }
        }
        (best, best_d2.sqrt())
    }
}

/// Regular grid mapping a (Rd_DC, Rd_AC) pair to (mua, musp), with the
/// forward-model provenance captured in its metadata.
#[derive(Debug, Clone)]
pub struct ReflectanceLut {
    fx_dc: f64,
    fx_ac: f64,
    mua_grid: Vec<f64>,
    musp_grid: Vec<f64>,
    /// rd tables indexed `[mua_index * musp_grid.len() + musp_index]`.
    rd_dc: Vec<f64>,
    rd_ac: Vec<f64>,
    refractive_index: f64,
    model_id: String,
    version: u32,
    index: InverseIndex,
}

fn check_strictly_increasing(name: &str, v: &[f64]) -> Result<()> {
    if v.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{name} grid needs at least 2 samples"
        )));
    }
    if v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!(
            "{name} grid must be strictly increasing"
        )));
    }
    Ok(())
}

impl ReflectanceLut {
    /// Assembles a LUT from precomputed tables, enforcing every structural
    /// invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_tables(
        fx_dc: f64,
        fx_ac: f64,
        mua_grid: Vec<f64>,
        musp_grid: Vec<f64>,
        rd_dc: Vec<f64>,
        rd_ac: Vec<f64>,
        refractive_index: f64,
        model_id: String,
        version: u32,
    ) -> Result<Self> {
        if fx_dc != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "DC spatial frequency must be exactly 0, got {fx_dc}"
            )));
        }
        if !(fx_ac > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "AC spatial frequency must be positive, got {fx_ac}"
            )));
        }
        check_strictly_increasing("mua", &mua_grid)?;
        check_strictly_increasing("musp", &musp_grid)?;
        if mua_grid[0] <= 0.0 || musp_grid[0] <= 0.0 {
            return Err(Error::InvalidArgument(
                "grid lower bounds must be positive".into(),
            ));
        }
        let (nm, ns) = (mua_grid.len(), musp_grid.len());
        if rd_dc.len() != nm * ns || rd_ac.len() != nm * ns {
            return Err(Error::InvalidArgument(format!(
                "table size must be {}x{}",
                nm, ns
            )));
        }
        for table in [&rd_dc, &rd_ac] {
            if table.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
                return Err(Error::InvalidArgument(
                    "reflectance values must lie in (0, 1]".into(),
                ));
            }
        }
        // Rd_DC must strictly decrease along mua for every musp column.
        for j in 0..ns {
            for i in 0..nm - 1 {
                if !(rd_dc[(i + 1) * ns + j] < rd_dc[i * ns + j]) {
                    return Err(Error::InvalidArgument(format!(
                        "rd_dc is not strictly decreasing in mua at musp index {j}"
                    )));
                }
            }
        }
        let mut lut = Self {
            fx_dc,
            fx_ac,
            mua_grid,
            musp_grid,
            rd_dc,
            rd_ac,
            refractive_index,
            model_id,
            version,
            index: InverseIndex {
                dc_min: 0.0,
                dc_max: 0.0,
                ac_min: 0.0,
                ac_max: 0.0,
                buckets_per_axis: 1,
                buckets: vec![Vec::new()],
                triangles: Vec::new(),
            },
        };
        lut.index = InverseIndex::build(&lut);
        Ok(lut)
    }

    pub fn fx_dc(&self) -> f64 {
        self.fx_dc
    }

    pub fn fx_ac(&self) -> f64 {
        self.fx_ac
    }

    pub fn mua_grid(&self) -> &[f64] {
        &self.mua_grid
    }

    pub fn musp_grid(&self) -> &[f64] {
        &self.musp_grid
    }

    pub fn refractive_index(&self) -> f64 {
        self.refractive_index
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn rd_dc_at(&self, mua_index: usize, musp_index: usize) -> f64 {
        self.rd_dc[mua_index * self.musp_grid.len() + musp_index]
    }

    pub fn rd_ac_at(&self, mua_index: usize, musp_index: usize) -> f64 {
        self.rd_ac[mua_index * self.musp_grid.len() + musp_index]
    }

    /// Persists the LUT: JSON header plus raw f32 tables.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_string(&LutHeader {
            format: "oxymap-lut".into(),
            version: self.version,
            model_id: self.model_id.clone(),
            fx_dc: self.fx_dc,
            fx_ac: self.fx_ac,
            refractive_index: self.refractive_index,
            mua_grid: self.mua_grid.clone(),
            musp_grid: self.musp_grid.clone(),
        })?;
        let mut blob = io::f32_bytes(&self.rd_dc);
        blob.extend(io::f32_bytes(&self.rd_ac));
        io::write_container(path, LUT_MAGIC, &header, &blob)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, blob) = io::read_container(path, LUT_MAGIC)?;
        let h: LutHeader = serde_json::from_str(&header)?;
        let count = h.mua_grid.len() * h.musp_grid.len();
        let rd_dc = io::f32_slice(&blob, 0, count)?;
        let rd_ac = io::f32_slice(&blob, count * 4, count)?;
        Self::from_tables(
            h.fx_dc,
            h.fx_ac,
            h.mua_grid,
            h.musp_grid,
            rd_dc,
            rd_ac,
            h.refractive_index,
            h.model_id,
            h.version,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct LutHeader {
    format: String,
    version: u32,
    model_id: String,
    fx_dc: f64,
    fx_ac: f64,
    refractive_index: f64,
    mua_grid: Vec<f64>,
    musp_grid: Vec<f64>,
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Populates a LUT by evaluating the forward model on a log-spaced grid.
pub fn build_lut(
    model: &dyn ForwardModel,
    mua_range: (f64, f64),
    musp_range: (f64, f64),
    grid_sizes: (usize, usize),
    fx_dc: f64,
    fx_ac: f64,
) -> Result<ReflectanceLut> {
    if !(mua_range.0 > 0.0 && mua_range.1 > mua_range.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid mua range {mua_range:?}"
        )));
    }
    if !(musp_range.0 > 0.0 && musp_range.1 > musp_range.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid musp range {musp_range:?}"
        )));
    }
    if grid_sizes.0 < 2 || grid_sizes.1 < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid sizes must be >= 2, got {grid_sizes:?}"
        )));
    }
    if fx_dc != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "DC spatial frequency must be exactly 0, got {fx_dc}"
        )));
    }
    let mua_grid = log_spaced(mua_range.0, mua_range.1, grid_sizes.0);
    let musp_grid = log_spaced(musp_range.0, musp_range.1, grid_sizes.1);
    let ns = musp_grid.len();
    let mut rd_dc = vec![0.0; mua_grid.len() * ns];
    let mut rd_ac = vec![0.0; mua_grid.len() * ns];
    for (i, &mua) in mua_grid.iter().enumerate() {
        for (j, &musp) in musp_grid.iter().enumerate() {
            rd_dc[i * ns + j] = model.reflectance(mua, musp, fx_dc)?;
            rd_ac[i * ns + j] = model.reflectance(mua, musp, fx_ac)?;
        }
    }
    ReflectanceLut::from_tables(
        fx_dc,
        fx_ac,
        mua_grid,
        musp_grid,
        rd_dc,
        rd_ac,
        model.refractive_index(),
        model.id().to_string(),
        1,
    )
}

/// Builds the default LUT (tissue-scale grids, fx = 0 / 0.2 mm^-1, n = 1.4).
pub fn build_default_lut() -> Result<ReflectanceLut> {
    let model = DiffusionModel::new(DEFAULT_REFRACTIVE_INDEX)?;
    build_lut(
        &model,
        DEFAULT_MUA_RANGE,
        DEFAULT_MUSP_RANGE,
        (DEFAULT_GRID_SIZE, DEFAULT_GRID_SIZE),
        0.0,
        DEFAULT_FX_AC,
    )
}

/// Inverts one reflectance pair. Out-of-gamut queries report the nearest
/// reachable pair instead of silently clamping.
pub fn lut_invert(rd_dc: f64, rd_ac: f64, lut: &ReflectanceLut) -> Result<(f64, f64)> {
    match lut.index.query(rd_dc, rd_ac) {
        Some(pair) => Ok(pair),
        None => {
            let (nearest, distance) = lut.index.nearest_node(rd_dc, rd_ac);
            Err(Error::OutOfGamut {
                rd_dc,
                rd_ac,
                nearest,
                distance,
            })
        }
    }
}

/// Per-pixel inversion of a reflectance-pair image. Out-of-gamut pixels are
/// marked invalid and counted rather than failing the whole map.
pub fn lut_invert_map(
    rd_dc: &ImagePlane,
    rd_ac: &ImagePlane,
    lut: &ReflectanceLut,
    mask: Option<&Mask>,
    wavelength_nm: f64,
) -> Result<(OpticalPropertyMap, GamutStats)> {
    rd_dc.check_same_dims(rd_ac, "lut_invert_map")?;
    if let Some(m) = mask {
        if m.dims() != rd_dc.dims() {
            return Err(Error::DimensionMismatch {
                context: "lut_invert_map mask",
                expected: rd_dc.dims(),
                got: m.dims(),
            });
        }
    }
    let (w, h) = rd_dc.dims();
    let mut mua = vec![INVALID; w * h];
    let mut musp = vec![INVALID; w * h];
    let counts: Vec<(usize, usize, usize)> = mua
        .par_chunks_mut(w)
        .zip(musp.par_chunks_mut(w))
        .enumerate()
        .map(|(r, (mua_row, musp_row))| {
            let mut inverted = 0;
            let mut oog = 0;
            let mut invalid = 0;
            for c in 0..w {
                let in_mask = mask.map(|m| m.get(r, c)).unwrap_or(true);
                let dc = rd_dc.get(r, c);
                let ac = rd_ac.get(r, c);
                if !in_mask || !dc.is_finite() || !ac.is_finite() {
                    invalid += 1;
                    continue;
                }
                match lut.index.query(dc, ac) {
                    Some((a, s)) => {
                        mua_row[c] = a;
                        musp_row[c] = s;
                        inverted += 1;
                    }
                    None => oog += 1,
                }
            }
            (inverted, oog, invalid)
        })
        .collect();

    let mut stats = GamutStats {
        total: w * h,
        inverted: 0,
        out_of_gamut: 0,
        invalid_input: 0,
    };
    for (inv, oog, bad) in counts {
        stats.inverted += inv;
        stats.out_of_gamut += oog;
        stats.invalid_input += bad;
    }
    let mua = ImagePlane::with_invalid(w, h, rd_dc.pitch_mm(), mua)?;
    let musp = ImagePlane::with_invalid(w, h, rd_dc.pitch_mm(), musp)?;
    Ok((OpticalPropertyMap::new(mua, musp, wavelength_nm)?, stats))
}
