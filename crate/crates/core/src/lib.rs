//! Forward and inverse solvers for layered conductivity inclusions in the
//! plane.
//!
//! * [`bem`] — boundary-integral solver for nested smooth interfaces:
//!   densities, generalized polarization tensors, spectrum.
//! * [`disks`] — closed-form engine for concentric disks.
//! * [`inverse`] — recovery of center, radii and conductivities from one
//!   far-field measurement.
//! * [`workbench`] — experiment configs, synthetic data and file formats.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bem;
pub mod disks;
pub mod error;
pub mod fit;
pub mod inverse;
pub mod linalg;
pub mod model;
pub mod poly;
pub mod workbench;

pub use error::{Error, Result};
pub use model::{
    classify_order, contrast, contrasts_of, ConcentricDisks, Contrasts, HarmonicBackground, LayeredShape, OrderClass,
    Point, SmoothCurve, Violation,
};
