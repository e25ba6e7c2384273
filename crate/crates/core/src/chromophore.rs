//! Chromophore fitting and oxygen saturation.
//!
//! Per pixel, absorption at each wavelength is modeled as a non-negative
//! linear combination of chromophore extinction spectra,
//! `mua(lambda_i) = sum_n eps_n(lambda_i) c_n`, solved by non-negative
//! least squares. Saturation is the oxygenated fraction of total
//! hemoglobin, `c_HbO2 / (c_HbO2 + c_HHb)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::photon::OpticalPropertyMap;
use crate::raster::{ImagePlane, StO2Map, INVALID};

/// Chromophore name used for oxygenated hemoglobin.
pub const HBO2: &str = "HbO2";
/// Chromophore name used for de-oxygenated hemoglobin.
pub const HHB: &str = "HHb";

/// Wavelength rows match a query within this tolerance (nearest tabulated
/// nanometer; no spectral interpolation).
const WAVELENGTH_TOL_NM: f64 = 0.5;

/// Extinction-coefficient matrix over wavelengths x chromophores.
#[derive(Debug, Clone)]
pub struct ChromophoreBasis {
    wavelengths_nm: Vec<f64>,
    names: Vec<String>,
    /// Flattened row-major W x N matrix.
    epsilon: Vec<f64>,
}

/// On-disk schema of a basis file.
#[derive(Serialize, Deserialize)]
struct BasisFile {
    wavelengths_nm: Vec<f64>,
    names: Vec<String>,
    epsilon_rows: Vec<Vec<f64>>,
    units: String,
    source: String,
}

impl ChromophoreBasis {
    pub fn new(wavelengths_nm: Vec<f64>, names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let w = wavelengths_nm.len();
        let n = names.len();
        if n < 2 {
            return Err(Error::InvalidArgument(
                "basis needs at least two chromophores".into(),
            ));
        }
        if w < n {
            return Err(Error::InvalidArgument(format!(
                "basis needs at least as many wavelengths ({w}) as chromophores ({n})"
            )));
        }
        if rows.len() != w || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "extinction matrix must be {w}x{n}"
            )));
        }
        let mut epsilon = Vec::with_capacity(w * n);
        for row in &rows {
            for &v in row {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "extinction coefficients must be non-negative, got {v}"
                    )));
                }
                epsilon.push(v);
            }
        }
        let basis = Self {
            wavelengths_nm,
            names,
            epsilon,
        };
        if !basis.columns_independent() {
            return Err(Error::SingularBasis);
        }
        Ok(basis)
    }

    /// The hemoglobin table shipped with the crate (four red/NIR
    /// wavelengths, HbO2 and HHb columns).
    pub fn builtin_hemoglobin() -> Self {
        Self::from_json(include_str!("../data/hemoglobin.json"))
            .expect("shipped hemoglobin table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: BasisFile = serde_json::from_str(text)?;
        Self::new(f.wavelengths_nm, f.names, f.epsilon_rows)
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Vec<f64>> = (0..self.num_wavelengths())
            .map(|i| self.row(i).to_vec())
            .collect();
        serde_json::to_string_pretty(&BasisFile {
            wavelengths_nm: self.wavelengths_nm.clone(),
            names: self.names.clone(),
            epsilon_rows: rows,
            units: "mm^-1 per mM".into(),
            source: "derived basis".into(),
        })
        .expect("basis serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn wavelengths_nm(&self) -> &[f64] {
        &self.wavelengths_nm
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_wavelengths(&self) -> usize {
        self.wavelengths_nm.len()
    }

    pub fn num_chromophores(&self) -> usize {
        self.names.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        let n = self.num_chromophores();
        &self.epsilon[i * n..(i + 1) * n]
    }

    /// Index of the tabulated row for a wavelength.
    pub fn row_for_wavelength(&self, wavelength_nm: f64) -> Result<usize> {
        self.wavelengths_nm
            .iter()
            .position(|&w| (w - wavelength_nm).abs() <= WAVELENGTH_TOL_NM)
            .ok_or(Error::WavelengthNotInBasis { wavelength_nm })
    }

    /// Extinction row for a wavelength.
    pub fn epsilon_at(&self, wavelength_nm: f64) -> Result<&[f64]> {
        Ok(self.row(self.row_for_wavelength(wavelength_nm)?))
    }

    /// Restricts the basis to a subset of its wavelengths (e.g. using the
    /// shipped 4-wavelength table for a 2-wavelength measurement).
    pub fn subset(&self, wavelengths_nm: &[f64]) -> Result<ChromophoreBasis> {
        let rows: Result<Vec<Vec<f64>>> = wavelengths_nm
            .iter()
            .map(|&w| Ok(self.epsilon_at(w)?.to_vec()))
            .collect();
        ChromophoreBasis::new(wavelengths_nm.to_vec(), self.names.clone(), rows?)
    }

    /// Forward synthesis: `mua = eps . c` at one wavelength.
    pub fn synthesize_mua(&self, wavelength_nm: f64, concentrations: &[f64]) -> Result<f64> {
        let row = self.epsilon_at(wavelength_nm)?;
        if concentrations.len() != row.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} concentrations, got {}",
                row.len(),
                concentrations.len()
            )));
        }
        Ok(row
            .iter()
            .zip(concentrations)
            .map(|(&e, &c)| e * c)
            .sum())
    }

    /// Gram-determinant rank check on the (small) extinction matrix.
    fn columns_independent(&self) -> bool {
        let w = self.num_wavelengths();
        let n = self.num_chromophores();
        let mut gram = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let mut s = 0.0;
                for i in 0..w {
                    s += self.epsilon[i * n + a] * self.epsilon[i * n + b];
                }
                gram[a * n + b] = s;
            }
        }
        // Gaussian elimination with partial pivoting; a vanishing pivot
        // relative to the matrix scale means rank deficiency.
        let scale = gram.iter().cloned().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return false;
        }
        let mut m = gram;
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if m[r * n + col].abs() > m[piv * n + col].abs() {
                    piv = r;
                }
            }
            if m[piv * n + col].abs() < 1e-12 * scale {
                return false;
            }
            if piv != col {
                for k in 0..n {
                    m.swap(col * n + k, piv * n + k);
                }
            }
            for r in col + 1..n {
                let f = m[r * n + col] / m[col * n + col];
                for k in col..n {
                    m[r * n + k] -= f * m[col * n + k];
                }
            }
        }
        true
    }
}

/// Per-pixel chromophore concentrations, one plane per chromophore.
#[derive(Debug, Clone)]
pub struct ConcentrationMap {
    names: Vec<String>,
    planes: Vec<ImagePlane>,
}

impl ConcentrationMap {
    pub fn new(names: Vec<String>, planes: Vec<ImagePlane>) -> Result<Self> {
        if names.len() != planes.len() || names.is_empty() {
            return Err(Error::InvalidArgument(
                "concentration map needs one plane per chromophore".into(),
            ));
        }
        for p in &planes[1..] {
            planes[0].check_same_dims(p, "concentration map")?;
        }
        Ok(Self { names, planes })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn plane(&self, name: &str) -> Result<&ImagePlane> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.planes[i])
            .ok_or_else(|| Error::MissingChromophore(name.to_string()))
    }

    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }
}

/// Non-negative least squares via the active-set method. The systems here
/// are tiny (a handful of wavelengths by a handful of chromophores), so
/// the inner unconstrained solves go through the normal equations.
///
/// `matrix` is row-major `rows x cols`; returns `c >= 0` minimizing
/// `||matrix . c - rhs||_2`.
pub fn nnls(matrix: &[f64], rows: usize, cols: usize, rhs: &[f64]) -> Result<Vec<f64>> {
    if matrix.len() != rows * cols || rhs.len() != rows {
        return Err(Error::InvalidArgument("nnls shape mismatch".into()));
    }
    let scale = matrix
        .iter()
        .cloned()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    let tol = 1e-12 * scale * rhs.iter().cloned().fold(0.0_f64, |m, v| m.max(v.abs())).max(scale);

    let mut c = vec![0.0; cols];
    let mut passive = vec![false; cols];

    // Solves the unconstrained least-squares problem restricted to the
    // passive columns; returns per-column values (zeros elsewhere).
    let solve_passive = |passive: &[bool]| -> Result<Vec<f64>> {
        let idx: Vec<usize> = (0..cols).filter(|&j| passive[j]).collect();
        let k = idx.len();
        let mut ata = vec![0.0; k * k];
        let mut atb = vec![0.0; k];
        for (a, &ja) in idx.iter().enumerate() {
            for (b, &jb) in idx.iter().enumerate() {
                let mut s = 0.0;
                for r in 0..rows {
                    s += matrix[r * cols + ja] * matrix[r * cols + jb];
                }
                ata[a * k + b] = s;
            }
            let mut s = 0.0;
            for r in 0..rows {
                s += matrix[r * cols + ja] * rhs[r];
            }
            atb[a] = s;
        }
        // Gaussian elimination with partial pivoting.
        for col in 0..k {
            let mut piv = col;
            for r in col + 1..k {
                if ata[r * k + col].abs() > ata[piv * k + col].abs() {
                    piv = r;
                }
            }
            if ata[piv * k + col].abs() < 1e-14 * scale * scale {
                return Err(Error::SingularBasis);
            }
            if piv != col {
                for kk in 0..k {
                    ata.swap(col * k + kk, piv * k + kk);
                }
                atb.swap(col, piv);
            }
            for r in col + 1..k {
                let f = ata[r * k + col] / ata[col * k + col];
                for kk in col..k {
                    ata[r * k + kk] -= f * ata[col * k + kk];
                }
                atb[r] -= f * atb[col];
            }
        }
        let mut z = vec![0.0; k];
        for col in (0..k).rev() {
            let mut s = atb[col];
            for kk in col + 1..k {
                s -= ata[col * k + kk] * z[kk];
            }
            z[col] = s / ata[col * k + col];
        }
        let mut full = vec![0.0; cols];
        for (a, &j) in idx.iter().enumerate() {
            full[j] = z[a];
        }
        Ok(full)
    };

    for _outer in 0..(3 * cols + 10) {
        // Gradient of the residual at the current iterate.
        let mut grad = vec![0.0; cols];
        for r in 0..rows {
            let mut pred = 0.0;
            for j in 0..cols {
                pred += matrix[r * cols + j] * c[j];
            }
            let res = rhs[r] - pred;
            for j in 0..cols {
                grad[j] += matrix[r * cols + j] * res;
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..cols {
            if !passive[j]
                && grad[j] > tol
                && best.map(|(_, g)| grad[j] > g).unwrap_or(true)
            {
                best = Some((j, grad[j]));
            }
        }
        let Some((enter, _)) = best else {
            return Ok(c);
        };
        passive[enter] = true;

        loop {
            let z = solve_passive(&passive)?;
            let all_positive = (0..cols).filter(|&j| passive[j]).all(|j| z[j] > 0.0);
            if all_positive {
                c = z;
                break;
            }
            // Step toward z only as far as feasibility allows, then drop
            // the columns that hit zero.
            let mut alpha = f64::INFINITY;
            for j in 0..cols {
                if passive[j] && z[j] <= 0.0 {
                    let denom = c[j] - z[j];
                    if denom > 0.0 {
                        alpha = alpha.min(c[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            for j in 0..cols {
                if passive[j] {
                    c[j] += alpha * (z[j] - c[j]);
                    if c[j] <= tol.max(0.0) {
                        c[j] = 0.0;
                        passive[j] = false;
                    }
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Ok(c)
}

/// Fits chromophore concentrations at every pixel of a co-registered
/// absorption stack. The stack must provide exactly one plane per basis
/// wavelength. Pixels invalid in any input plane stay invalid.
pub fn fit_chromophores(
    mua_stack: &[&OpticalPropertyMap],
    basis: &ChromophoreBasis,
) -> Result<ConcentrationMap> {
    let w = basis.num_wavelengths();
    let n = basis.num_chromophores();
    if mua_stack.len() != w {
        return Err(Error::InvalidArgument(format!(
            "expected {} absorption maps (one per basis wavelength), got {}",
            w,
            mua_stack.len()
        )));
    }
    // One stack plane per basis row, in basis order; every stack entry
    // must serve exactly one row.
    let mut ordered: Vec<&OpticalPropertyMap> = Vec::with_capacity(w);
    let mut used = vec![false; mua_stack.len()];
    for &target in basis.wavelengths_nm() {
        let idx = mua_stack
            .iter()
            .position(|m| (m.wavelength_nm() - target).abs() <= WAVELENGTH_TOL_NM)
            .ok_or(Error::WavelengthNotInBasis {
                wavelength_nm: target,
            })?;
        if used[idx] {
            return Err(Error::InvalidArgument(format!(
                "absorption map at {} nm matches more than one basis wavelength",
                mua_stack[idx].wavelength_nm()
            )));
        }
        used[idx] = true;
        ordered.push(mua_stack[idx]);
    }
    for m in &ordered[1..] {
        ordered[0]
            .mua()
            .check_same_dims(m.mua(), "chromophore stack")?;
    }

    let (width, height) = ordered[0].dims();
    let pitch = ordered[0].mua().pitch_mm();
    let mut matrix = vec![0.0; w * n];
    for (i, &lambda) in basis.wavelengths_nm().iter().enumerate() {
        matrix[i * n..(i + 1) * n].copy_from_slice(basis.epsilon_at(lambda)?);
    }

    let mut out = vec![vec![INVALID; width * height]; n];
    // Split the output planes row-wise so each worker owns disjoint rows.
    let mut row_views: Vec<Vec<&mut [f64]>> = Vec::with_capacity(n);
    for plane in out.iter_mut() {
        row_views.push(plane.chunks_mut(width).collect());
    }
    // Transpose: per-row bundles of per-chromophore slices.
    let mut per_row: Vec<Vec<&mut [f64]>> = (0..height).map(|_| Vec::with_capacity(n)).collect();
    for views in row_views {
        for (r, slice) in views.into_iter().enumerate() {
            per_row[r].push(slice);
        }
    }

    per_row
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(r, rows)| -> Result<()> {
            let mut rhs = vec![0.0; w];
            for c in 0..width {
                let mut ok = true;
                for (i, m) in ordered.iter().enumerate() {
                    let v = m.mua().get(r, c);
                    if !v.is_finite() {
                        ok = false;
                        break;
                    }
                    rhs[i] = v;
                }
                if !ok {
                    continue;
                }
                let conc = nnls(&matrix, w, n, &rhs)?;
                for (k, plane_row) in rows.iter_mut().enumerate() {
                    plane_row[c] = conc[k];
                }
            }
            Ok(())
        })?;

    let planes: Result<Vec<ImagePlane>> = out
        .into_iter()
        .map(|d| ImagePlane::with_invalid(width, height, pitch, d))
        .collect();
    ConcentrationMap::new(basis.names().to_vec(), planes?)
}

/// Oxygen saturation from hemoglobin concentrations. Pixels with zero
/// total hemoglobin are marked invalid rather than evaluating 0/0.
pub fn sto2(conc: &ConcentrationMap) -> Result<StO2Map> {
    let hbo2 = conc.plane(HBO2)?;
    let hhb = conc.plane(HHB)?;
    let data = hbo2
        .data()
        .iter()
        .zip(hhb.data())
        .map(|(&o, &d)| {
            if !o.is_finite() || !d.is_finite() {
                INVALID
            } else {
                let total = o + d;
                if total > 0.0 {
                    o / total
                } else {
                    INVALID
                }
            }
        })
        .collect();
    StO2Map::new(ImagePlane::with_invalid(
        hbo2.width(),
        hbo2.height(),
        hbo2.pitch_mm(),
        data,
    )?)
}

/// Fits concentrations and computes saturation in one step.
pub fn sto2_from_mua(
    mua_stack: &[&OpticalPropertyMap],
    basis: &ChromophoreBasis,
) -> Result<StO2Map> {
    sto2(&fit_chromophores(mua_stack, basis)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn op_map(wavelength: f64, mua_value: f64, w: usize, h: usize) -> OpticalPropertyMap {
        OpticalPropertyMap::new(
            ImagePlane::filled(w, h, 0.5, mua_value).unwrap(),
            ImagePlane::filled(w, h, 0.5, 1.0).unwrap(),
            wavelength,
        )
        .unwrap()
    }

    #[test]
    fn identity_basis_recovers_mua() {
        let basis = ChromophoreBasis::new(
            vec![500.0, 600.0],
            vec![HBO2.into(), HHB.into()],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let stack = [op_map(500.0, 0.3, 4, 4), op_map(600.0, 0.7, 4, 4)];
        let conc = fit_chromophores(&[&stack[0], &stack[1]], &basis).unwrap();
        assert!((conc.plane(HBO2).unwrap().get(0, 0) - 0.3).abs() < 1e-12);
        assert!((conc.plane(HHB).unwrap().get(0, 0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn shipped_basis_round_trips_synthesized_mua() {
        let basis = ChromophoreBasis::builtin_hemoglobin()
            .subset(&[659.0, 851.0])
            .unwrap();
        let c_true = [0.05, 0.02];
        let mua659 = basis.synthesize_mua(659.0, &c_true).unwrap();
        let mua851 = basis.synthesize_mua(851.0, &c_true).unwrap();
        let stack = [op_map(659.0, mua659, 4, 4), op_map(851.0, mua851, 4, 4)];
        let conc = fit_chromophores(&[&stack[0], &stack[1]], &basis).unwrap();
        assert!((conc.plane(HBO2).unwrap().get(2, 2) - c_true[0]).abs() < 1e-9);
        assert!((conc.plane(HHB).unwrap().get(2, 2) - c_true[1]).abs() < 1e-9);
    }

    #[test]
    fn negative_unconstrained_solution_matches_boundary_scan() {
        let basis = ChromophoreBasis::builtin_hemoglobin()
            .subset(&[659.0, 851.0])
            .unwrap();
        let e659 = basis.epsilon_at(659.0).unwrap().to_vec();
        let e851 = basis.epsilon_at(851.0).unwrap().to_vec();
        // mua synthesized from a mixing vector with one negative entry, so
        // the unconstrained solution is infeasible.
        let c_mixed = [0.1, -0.005];
        let rhs = [
            e659[0] * c_mixed[0] + e659[1] * c_mixed[1],
            e851[0] * c_mixed[0] + e851[1] * c_mixed[1],
        ];
        assert!(rhs.iter().all(|&v| v > 0.0));
        let matrix = [e659[0], e659[1], e851[0], e851[1]];
        let got = nnls(&matrix, 2, 2, &rhs).unwrap();

        // Brute-force boundary scan oracle: one concentration pinned to
        // zero, the other swept over a fine grid.
        let residual = |c: &[f64]| -> f64 {
            let r0 = matrix[0] * c[0] + matrix[1] * c[1] - rhs[0];
            let r1 = matrix[2] * c[0] + matrix[3] * c[1] - rhs[1];
            (r0 * r0 + r1 * r1).sqrt()
        };
        let mut best = (vec![0.0, 0.0], residual(&[0.0, 0.0]));
        for i in 0..=400_000 {
            let v = i as f64 * 5e-7;
            for cand in [[v, 0.0], [0.0, v]] {
                let r = residual(&cand);
                if r < best.1 {
                    best = (cand.to_vec(), r);
                }
            }
        }
        assert!(
            residual(&got) <= best.1 + 1e-9,
            "nnls residual {} vs scan {}",
            residual(&got),
            best.1
        );
        assert!((got[0] - best.0[0]).abs() < 1e-4);
        assert!((got[1] - best.0[1]).abs() < 1e-4);
    }

    #[test]
    fn nnls_beats_feasible_probes() {
        // Optimality property: no random feasible point does better.
        let basis = ChromophoreBasis::builtin_hemoglobin();
        let n = basis.num_chromophores();
        let w = basis.num_wavelengths();
        let mut matrix = vec![0.0; w * n];
        for (i, &lambda) in basis.wavelengths_nm().iter().enumerate() {
            matrix[i * n..(i + 1) * n].copy_from_slice(basis.epsilon_at(lambda).unwrap());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let rhs: Vec<f64> = (0..w).map(|_| rng.gen_range(0.0..0.3)).collect();
            let fit = nnls(&matrix, w, n, &rhs).unwrap();
            let residual = |c: &[f64]| -> f64 {
                (0..w)
                    .map(|r| {
                        let pred: f64 =
                            (0..n).map(|j| matrix[r * n + j] * c[j]).sum();
                        (pred - rhs[r]).powi(2)
                    })
                    .sum()
            };
            let fit_res = residual(&fit);
            for _ in 0..50 {
                let probe: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.5)).collect();
                assert!(fit_res <= residual(&probe) + 1e-12);
            }
        }
    }

    #[test]
    fn sto2_basic_values() {
        let conc = ConcentrationMap::new(
            vec![HBO2.into(), HHB.into()],
            vec![
                ImagePlane::filled(2, 2, 0.5, 0.3).unwrap(),
                ImagePlane::filled(2, 2, 0.5, 0.7).unwrap(),
            ],
        )
        .unwrap();
        let map = sto2(&conc).unwrap();
        assert!((map.plane().get(0, 0) - 0.3).abs() < 1e-15);

        let fully_ox = ConcentrationMap::new(
            vec![HBO2.into(), HHB.into()],
            vec![
                ImagePlane::filled(2, 2, 0.5, 0.4).unwrap(),
                ImagePlane::filled(2, 2, 0.5, 0.0).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(sto2(&fully_ox).unwrap().plane().get(1, 1), 1.0);

        let degenerate = ConcentrationMap::new(
            vec![HBO2.into(), HHB.into()],
            vec![
                ImagePlane::filled(2, 2, 0.5, 0.0).unwrap(),
                ImagePlane::filled(2, 2, 0.5, 0.0).unwrap(),
            ],
        )
        .unwrap();
        let map = sto2(&degenerate).unwrap();
        assert!(!map.plane().is_valid(0, 0));
    }

    #[test]
    fn sto2_requires_hemoglobin_channels() {
        let conc = ConcentrationMap::new(
            vec!["water".into(), HHB.into()],
            vec![
                ImagePlane::filled(2, 2, 0.5, 0.1).unwrap(),
                ImagePlane::filled(2, 2, 0.5, 0.1).unwrap(),
            ],
        )
        .unwrap();
        assert!(matches!(
            sto2(&conc),
            Err(Error::MissingChromophore(_))
        ));
    }

    #[test]
    fn two_and_four_wavelength_stacks_agree() {
        let full = ChromophoreBasis::builtin_hemoglobin();
        let sub = full.subset(&[659.0, 851.0]).unwrap();
        let c_true = [0.034, 0.021];
        let maps: Vec<OpticalPropertyMap> = full
            .wavelengths_nm()
            .iter()
            .map(|&wl| op_map(wl, full.synthesize_mua(wl, &c_true).unwrap(), 6, 6))
            .collect();
        let four: Vec<&OpticalPropertyMap> = maps.iter().collect();
        let two: Vec<&OpticalPropertyMap> = vec![&maps[0], &maps[3]];

        let s4 = sto2_from_mua(&four, &full).unwrap();
        let s2 = sto2_from_mua(&two, &sub).unwrap();
        let expected = c_true[0] / (c_true[0] + c_true[1]);
        for r in 0..6 {
            for c in 0..6 {
                assert!((s4.plane().get(r, c) - expected).abs() < 1e-9);
                assert!((s4.plane().get(r, c) - s2.plane().get(r, c)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stack_map_may_serve_only_one_basis_row() {
        // Two basis rows 0.4 nm apart both match a map at the first row's
        // wavelength; reusing it must be rejected, not silently accepted.
        let basis = ChromophoreBasis::new(
            vec![659.0, 659.4],
            vec![HBO2.into(), HHB.into()],
            vec![vec![0.07, 0.74], vec![0.08, 0.70]],
        )
        .unwrap();
        let stack = [op_map(659.0, 0.02, 4, 4), op_map(659.4, 0.02, 4, 4)];
        assert!(matches!(
            fit_chromophores(&[&stack[0], &stack[1]], &basis),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn wavelength_mismatch_and_singular_basis_rejected() {
        let basis = ChromophoreBasis::builtin_hemoglobin()
            .subset(&[659.0, 851.0])
            .unwrap();
        let stack = [op_map(700.0, 0.02, 4, 4), op_map(851.0, 0.02, 4, 4)];
        assert!(matches!(
            fit_chromophores(&[&stack[0], &stack[1]], &basis),
            Err(Error::WavelengthNotInBasis { .. })
        ));

        assert!(matches!(
            ChromophoreBasis::new(
                vec![659.0, 851.0],
                vec![HBO2.into(), HHB.into()],
                vec![vec![0.2, 0.4], vec![0.1, 0.2]],
            ),
            Err(Error::SingularBasis)
        ));
        assert!(ChromophoreBasis::new(
            vec![659.0],
            vec![HBO2.into(), HHB.into()],
            vec![vec![0.2, 0.4]],
        )
        .is_err());
        assert!(ChromophoreBasis::new(
            vec![659.0, 851.0],
            vec![HBO2.into(), HHB.into()],
            vec![vec![-0.2, 0.4], vec![0.1, 0.2]],
        )
        .is_err());
    }
}
