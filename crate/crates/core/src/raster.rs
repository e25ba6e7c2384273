//! Raster types shared by every pipeline stage.
//!
//! An [`ImagePlane`] is a row-major grid of `f64` samples with a physical
//! pixel pitch. Pixels excluded from analysis carry an invalid sentinel
//! (NaN) rather than zero, so a masked-out region can never be confused
//! with a genuinely dark one. All statistics in this crate skip invalid
//! pixels.

use crate::error::{Error, Result};

/// Sentinel stored at pixels that have been masked out or marked invalid
/// by a pipeline stage.
pub const INVALID: f64 = f64::NAN;

/// A 2-D row-major grid of real-valued samples with physical pixel pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    pitch_mm: f64,
    data: Vec<f64>,
}

impl ImagePlane {
    /// Builds a plane from fully valid data. Every sample must be finite.
    pub fn new(width: usize, height: usize, pitch_mm: f64, data: Vec<f64>) -> Result<Self> {
        let plane = Self::with_invalid(width, height, pitch_mm, data)?;
        if plane.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPlane(
                "plane data contains non-finite values".into(),
            ));
        }
        Ok(plane)
    }

    /// Builds a plane whose data may already contain invalid sentinels.
    /// Infinities are still rejected; only NaN marks an invalid pixel.
    pub fn with_invalid(
        width: usize,
        height: usize,
        pitch_mm: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidPlane("width and height must be >= 1".into()));
        }
        if !(pitch_mm > 0.0) || !pitch_mm.is_finite() {
            return Err(Error::InvalidPlane(format!(
                "pitch_mm must be positive and finite, got {pitch_mm}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidPlane(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| v.is_infinite()) {
            return Err(Error::InvalidPlane(
                "plane data contains infinite values".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            pitch_mm,
            data,
        })
    }

    /// A plane filled with one value.
    pub fn filled(width: usize, height: usize, pitch_mm: f64, value: f64) -> Result<Self> {
        Self::new(width, height, pitch_mm, vec![value; width * height])
    }

    /// Builds a plane by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        pitch_mm: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::with_invalid(width, height, pitch_mm, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pitch_mm(&self) -> f64 {
        self.pitch_mm
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// True when the pixel holds a usable (finite) value.
    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_finite()
    }

    /// Number of valid pixels.
    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| v.is_finite()).count()
    }

    /// Checks that `other` has identical dimensions.
    pub fn check_same_dims(&self, other: &ImagePlane, context: &'static str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }

    /// Elementwise map preserving geometry. NaN sentinels pass through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImagePlane {
        ImagePlane {
            width: self.width,
            height: self.height,
            pitch_mm: self.pitch_mm,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Extracts the rectangle of size `w x h` whose top-left corner is
    /// `(row0, col0)`.
    pub fn crop(&self, row0: usize, col0: usize, w: usize, h: usize) -> Result<ImagePlane> {
        if row0 + h > self.height || col0 + w > self.width {
            return Err(Error::InvalidPlane(format!(
                "crop {w}x{h}@({row0},{col0}) exceeds plane {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for r in 0..h {
            let start = (row0 + r) * self.width + col0;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        ImagePlane::with_invalid(w, h, self.pitch_mm, data)
    }

    /// Mirrors the plane left-right.
    pub fn flip_horizontal(&self) -> ImagePlane {
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.height {
            let row = &self.data[r * self.width..(r + 1) * self.width];
            data.extend(row.iter().rev());
        }
        ImagePlane {
            width: self.width,
            height: self.height,
            pitch_mm: self.pitch_mm,
            data,
        }
    }

    /// Mirrors the plane top-bottom.
    pub fn flip_vertical(&self) -> ImagePlane {
        let mut data = Vec::with_capacity(self.data.len());
        for r in (0..self.height).rev() {
            data.extend_from_slice(&self.data[r * self.width..(r + 1) * self.width]);
        }
        ImagePlane {
            width: self.width,
            height: self.height,
            pitch_mm: self.pitch_mm,
            data,
        }
    }
}

/// Boolean inclusion mask with the same geometry as the plane it gates.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidPlane("mask dimensions must be >= 1".into()));
        }
        if bits.len() != width * height {
            return Err(Error::InvalidPlane(format!(
                "mask bit count {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn all_true(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    /// Mask selecting the interior after removing a `border`-pixel frame.
    pub fn interior(width: usize, height: usize, border: usize) -> Self {
        Self::from_fn(width, height, |r, c| {
            r >= border && c >= border && r + border < height && c + border < width
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Intersection of two masks of identical dimensions.
    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                context: "mask intersection",
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(Mask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }
}

/// Fractional tissue oxygen saturation per pixel. Valid values lie in [0, 1];
/// invalid pixels carry the NaN sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct StO2Map {
    plane: ImagePlane,
}

impl StO2Map {
    /// Wraps a plane, enforcing that every valid pixel lies in [0, 1].
    pub fn new(plane: ImagePlane) -> Result<Self> {
        for &v in plane.data() {
            if v.is_finite() && !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidPlane(format!(
                    "saturation value {v} is outside [0, 1]"
                )));
            }
        }
        Ok(Self { plane })
    }

    pub fn plane(&self) -> &ImagePlane {
        &self.plane
    }

    pub fn into_plane(self) -> ImagePlane {
        self.plane
    }
}

/// Normalized mean absolute error over masked pixels:
/// `sum |pred - gt| / sum gt`, skipping pixels that are masked out or
/// invalid in either operand.
pub fn nmae(pred: &StO2Map, gt: &StO2Map, mask: &Mask) -> Result<f64> {
    let p = pred.plane();
    let g = gt.plane();
    p.check_same_dims(g, "nmae")?;
    if p.dims() != mask.dims() {
        return Err(Error::DimensionMismatch {
            context: "nmae mask",
            expected: p.dims(),
            got: mask.dims(),
        });
    }

    let mut abs_sum = 0.0;
    let mut gt_sum = 0.0;
    let mut count = 0usize;
    for ((&pv, &gv), &m) in p.data().iter().zip(g.data()).zip(mask.bits()) {
        if m && pv.is_finite() && gv.is_finite() {
            abs_sum += (pv - gv).abs();
            gt_sum += gv;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    if gt_sum <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(abs_sum / gt_sum)
}

/// Same metric over raw planes, for maps that are not saturation-valued.
pub fn nmae_planes(pred: &ImagePlane, gt: &ImagePlane, mask: &Mask) -> Result<f64> {
    let pred = StO2Map {
        plane: pred.map(|v| v),
    };
    let gt_map = StO2Map {
        plane: gt.map(|v| v),
    };
    // StO2Map is only a carrier here; range validation intentionally skipped.
    nmae(&pred, &gt_map, mask)
}

/// Replaces masked-out pixels with the invalid sentinel; unmasked pixels
/// are passed through unchanged.
pub fn apply_mask(plane: &ImagePlane, mask: &Mask) -> Result<ImagePlane> {
    if plane.dims() != mask.dims() {
        return Err(Error::DimensionMismatch {
            context: "apply_mask",
            expected: plane.dims(),
            got: mask.dims(),
        });
    }
    let data = plane
        .data()
        .iter()
        .zip(mask.bits())
        .map(|(&v, &m)| if m { v } else { INVALID })
        .collect();
    ImagePlane::with_invalid(plane.width(), plane.height(), plane.pitch_mm(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force per-pixel oracle for the masked metric.
    fn nmae_oracle(pred: &ImagePlane, gt: &ImagePlane, mask: &Mask) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut n = 0usize;
        for r in 0..pred.height() {
            for c in 0..pred.width() {
                if mask.get(r, c) && pred.is_valid(r, c) && gt.is_valid(r, c) {
                    num += (pred.get(r, c) - gt.get(r, c)).abs();
                    den += gt.get(r, c);
                    n += 1;
                }
            }
        }
        if n == 0 || den <= 0.0 {
            None
        } else {
            Some(num / den)
        }
    }

    fn random_sto2(rng: &mut ChaCha8Rng, w: usize, h: usize) -> StO2Map {
        let data: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.05..0.95)).collect();
        StO2Map::new(ImagePlane::new(w, h, 0.5, data).unwrap()).unwrap()
    }

    #[test]
    fn plane_invariants_rejected() {
        assert!(ImagePlane::new(0, 4, 0.5, vec![]).is_err());
        assert!(ImagePlane::new(2, 2, 0.0, vec![0.0; 4]).is_err());
        assert!(ImagePlane::new(2, 2, 0.5, vec![0.0; 3]).is_err());
        assert!(ImagePlane::new(2, 2, 0.5, vec![0.0, 1.0, f64::NAN, 2.0]).is_err());
        assert!(ImagePlane::with_invalid(2, 2, 0.5, vec![0.0, 1.0, f64::NAN, 2.0]).is_ok());
        assert!(ImagePlane::with_invalid(2, 2, 0.5, vec![0.0, f64::INFINITY, 1.0, 2.0]).is_err());
    }

    #[test]
    fn nmae_identity_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_sto2(&mut rng, 8, 8);
        let mask = Mask::all_true(8, 8);
        assert_eq!(nmae(&m, &m, &mask).unwrap(), 0.0);
    }

    #[test]
    fn nmae_uniform_scaling() {
        // pred = 1.1 * gt elementwise -> the ratio collapses to 0.1.
        let gt = StO2Map::new(ImagePlane::filled(8, 8, 0.5, 0.5).unwrap()).unwrap();
        let pred =
            StO2Map::new(ImagePlane::filled(8, 8, 0.5, 0.55).unwrap()).unwrap();
        let mask = Mask::all_true(8, 8);
        let v = nmae(&pred, &gt, &mask).unwrap();
        assert!((v - 0.1).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn nmae_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let pred = random_sto2(&mut rng, 8, 8);
            let gt = random_sto2(&mut rng, 8, 8);
            let mask = Mask::from_fn(8, 8, |_, _| rng.gen_bool(0.7));
            match nmae_oracle(pred.plane(), gt.plane(), &mask) {
                Some(expected) => {
                    let got = nmae(&pred, &gt, &mask).unwrap();
                    assert!((got - expected).abs() < 1e-12);
                }
                None => assert!(nmae(&pred, &gt, &mask).is_err()),
            }
        }
    }

    #[test]
    fn nmae_error_paths_are_distinct() {
        let a = StO2Map::new(ImagePlane::filled(4, 4, 0.5, 0.5).unwrap()).unwrap();
        let b = StO2Map::new(ImagePlane::filled(4, 5, 0.5, 0.5).unwrap()).unwrap();
        assert!(matches!(
            nmae(&a, &b, &Mask::all_true(4, 4)),
            Err(Error::DimensionMismatch { .. })
        ));

        let empty = Mask::from_fn(4, 4, |_, _| false);
        assert!(matches!(nmae(&a, &a, &empty), Err(Error::EmptyMask)));

        let zero = StO2Map::new(ImagePlane::filled(4, 4, 0.5, 0.0).unwrap()).unwrap();
        assert!(matches!(
            nmae(&zero, &zero, &Mask::all_true(4, 4)),
            Err(Error::ZeroDenominator)
        ));
    }

    #[test]
    fn apply_mask_all_true_is_identity() {
        let plane = ImagePlane::from_fn(6, 4, 0.5, |r, c| (r * 10 + c) as f64).unwrap();
        let out = apply_mask(&plane, &Mask::all_true(6, 4)).unwrap();
        assert_eq!(out, plane);
    }

    #[test]
    fn apply_mask_all_false_then_nmae_is_empty() {
        let plane = ImagePlane::filled(4, 4, 0.5, 0.5).unwrap();
        let masked = apply_mask(&plane, &Mask::from_fn(4, 4, |_, _| false)).unwrap();
        assert_eq!(masked.valid_count(), 0);
        let m = StO2Map::new(masked).unwrap();
        let gt = StO2Map::new(plane).unwrap();
        assert!(matches!(
            nmae(&m, &gt, &Mask::all_true(4, 4)),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn checkerboard_mask_counts_half() {
        let plane = ImagePlane::filled(8, 8, 0.5, 1.0).unwrap();
        let mask = Mask::from_fn(8, 8, |r, c| (r + c) % 2 == 0);
        let masked = apply_mask(&plane, &mask).unwrap();
        // Counting oracle: exactly half of an even-sized board is selected.
        assert_eq!(masked.valid_count(), 8 * 8 / 2);
        assert_eq!(mask.count_true(), 8 * 8 / 2);
    }

    #[test]
    fn crop_and_flips() {
        let plane = ImagePlane::from_fn(4, 3, 0.5, |r, c| (r * 4 + c) as f64).unwrap();
        let crop = plane.crop(1, 2, 2, 2).unwrap();
        assert_eq!(crop.data(), &[6.0, 7.0, 10.0, 11.0]);
        let fh = plane.flip_horizontal();
        assert_eq!(fh.get(0, 0), 3.0);
        let fv = plane.flip_vertical();
        assert_eq!(fv.get(0, 0), 8.0);
        assert!(plane.crop(2, 2, 3, 1).is_err());
    }

    #[test]
    fn sto2_range_enforced() {
        assert!(StO2Map::new(ImagePlane::filled(2, 2, 0.5, 1.2).unwrap()).is_err());
        let with_nan =
            ImagePlane::with_invalid(2, 2, 0.5, vec![0.5, f64::NAN, 0.0, 1.0]).unwrap();
        assert!(StO2Map::new(with_nan).is_ok());
    }
}
