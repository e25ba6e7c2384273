//! Crate-wide error type.

use std::fmt;

/// Errors reported by the oxygenation pipeline.
///
/// Each failure mode is a distinct variant so a CLI wrapper can attribute
/// failures to the stage that produced them.
#[derive(Debug)]
pub enum Error {
    /// Two rasters that must be co-registered have different dimensions.
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A metric was asked to run over a mask with no usable pixels.
    EmptyMask,
    /// The normalization denominator of a metric summed to zero.
    ZeroDenominator,
    /// A scalar argument violated its domain (negative coefficient, n <= 1, ...).
    InvalidArgument(String),
    /// Raster construction or file contents violated an invariant.
    InvalidPlane(String),
    /// A reflectance query fell outside the region reachable by the forward
    /// model on the current grid. Carries the nearest reachable pair as a
    /// diagnostic.
    OutOfGamut {
        rd_dc: f64,
        rd_ac: f64,
        nearest: (f64, f64),
        distance: f64,
    },
    /// A requested wavelength has no row in the chromophore basis.
    WavelengthNotInBasis { wavelength_nm: f64 },
    /// The extinction matrix is rank-deficient.
    SingularBasis,
    /// A concentration map lacks a chromophore required by a computation.
    MissingChromophore(String),
    /// Measured data and LUT were built for different spatial frequencies.
    FrequencyMismatch { data_fx: f64, lut_fx: f64 },
    /// The modulation carrier is not representable at the plane's pixel pitch.
    CarrierAboveNyquist { fx: f64, nyquist: f64 },
    /// The image is too small or malformed for the requested transform.
    DegenerateImage(String),
    /// A reference magnitude was zero or negative at a pixel where the
    /// sample is valid.
    NonPositiveReference { row: usize, col: usize, value: f64 },
    /// A scene is smaller than the requested patch size.
    UndersizedScene {
        scene: (usize, usize),
        patch: usize,
    },
    /// A weight container's manifest is internally inconsistent.
    Manifest(String),
    /// A binary container failed structural validation.
    Format(String),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                context,
                expected,
                got,
            } => write!(
                f,
                "dimension mismatch in {context}: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            Error::EmptyMask => write!(f, "empty mask: no usable pixels"),
            Error::ZeroDenominator => write!(f, "zero denominator: ground truth sums to zero"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InvalidPlane(msg) => write!(f, "invalid plane: {msg}"),
            Error::OutOfGamut {
                rd_dc,
                rd_ac,
                nearest,
                distance,
            } => write!(
                f,
                "reflectance pair ({rd_dc:.6}, {rd_ac:.6}) is outside the LUT gamut; \
                 nearest reachable pair is ({:.6}, {:.6}) at distance {distance:.6}",
                nearest.0, nearest.1
            ),
            Error::WavelengthNotInBasis { wavelength_nm } => {
                write!(f, "wavelength {wavelength_nm} nm is not in the basis")
            }
            Error::SingularBasis => write!(f, "extinction matrix is singular"),
            Error::MissingChromophore(name) => {
                write!(f, "concentration map lacks required chromophore {name:?}")
            }
            Error::FrequencyMismatch { data_fx, lut_fx } => write!(
                f,
                "spatial frequency mismatch: data at {data_fx} mm^-1, LUT at {lut_fx} mm^-1"
            ),
            Error::CarrierAboveNyquist { fx, nyquist } => write!(
                f,
                "carrier {fx} mm^-1 exceeds the Nyquist frequency {nyquist} mm^-1"
            ),
            Error::DegenerateImage(msg) => write!(f, "degenerate image: {msg}"),
            Error::NonPositiveReference { row, col, value } => write!(
                f,
                "non-positive reference magnitude {value} at pixel ({row}, {col})"
            ),
            Error::UndersizedScene { scene, patch } => write!(
                f,
                "scene {}x{} is smaller than the patch size {patch}",
                scene.0, scene.1
            ),
            Error::Manifest(msg) => write!(f, "weight manifest: {msg}"),
            Error::Format(msg) => write!(f, "container format: {msg}"),
            Error::Io(e) => write!(f, "io: {e}"),
            Error::Json(e) => write!(f, "json: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
