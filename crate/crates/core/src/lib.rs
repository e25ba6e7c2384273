//! Tissue oxygenation mapping from structured illumination.
//!
//! This crate implements three measurement paths over a shared raster
//! substrate:
//!
//! 1. a conventional multi-phase structured-illumination pipeline
//!    (demodulation, reference calibration, lookup-table inversion,
//!    chromophore fitting) used as ground truth,
//! 2. a single-snapshot path that separates DC and AC modulation bands by
//!    Fourier-domain filtering, and
//! 3. a from-scratch CNN inference engine that maps a 3-channel encoded
//!    input directly to an oxygen-saturation map from an exported weight
//!    container.
//!
//! A synthetic phantom generator renders structured-illumination frames
//! from known scenes so every path can be validated against exact ground
//! truth.

// Negated float comparisons are used throughout to reject NaN alongside
// out-of-range values; indexed loops in the numeric kernels mirror the
// math they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod chromophore;
pub mod error;
pub mod infer;
pub mod io;
pub mod phantom;
pub mod photon;
pub mod raster;
pub mod sfdi;
pub mod ssop;
pub mod timeseries;

pub use error::{Error, Result};
pub use photon::{OpticalPropertyMap, ReflectanceLut};
pub use raster::{apply_mask, nmae, ImagePlane, Mask, StO2Map};
