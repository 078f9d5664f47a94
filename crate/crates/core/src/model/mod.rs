//! Domain types shared by the forward and inverse solvers.
//!
//! A layered inclusion is described either as concentric disks
//! ([`ConcentricDisks`]) or as nested smooth curves ([`LayeredShape`]).
//! Layers are numbered from the outside in, starting at 1; the background
//! has unit conductivity and is layer 0.

mod background;
mod curve;

pub use background::{classify_order, BackgroundSpec, BackgroundTerm, HarmonicBackground, OrderClass};
pub(crate) use curve::winding as curve_winding;
pub use curve::{CurveSamples, CurveSpec, LayeredShape, SmoothCurve};

use std::fmt;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Anything with an ordered list of layer conductivities (outer to inner).
pub trait Layered {
    fn sigmas(&self) -> &[f64];

    fn layer_count(&self) -> usize {
        self.sigmas().len()
    }
}

/// A failed structural invariant, as reported by `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Empty,
    LengthMismatch {
        radii: usize,
        sigmas: usize,
    },
    NonFinite {
        field: String,
        index: usize,
    },
    NonPositiveRadius {
        index: usize,
    },
    RadiiNotDecreasing {
        index: usize,
    },
    NonPositiveSigma {
        index: usize,
    },
    /// Layer `layer` has the same conductivity as layer `layer - 1`.
    AdjacentEqualConductivity {
        layer: usize,
    },
    ZeroSpeed {
        curve: usize,
    },
    SelfIntersecting {
        curve: usize,
    },
    Clockwise {
        curve: usize,
    },
    NotNested {
        outer: usize,
        inner: usize,
    },
    CurvesTouch {
        outer: usize,
        inner: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "structure has no layers"),
            Violation::LengthMismatch { radii, sigmas } => {
                write!(f, "{radii} interfaces but {sigmas} conductivities")
            }
            Violation::NonFinite { field, index } => write!(f, "{field}[{index}] is not finite"),
            Violation::NonPositiveRadius { index } => write!(f, "radius {} is not positive", index + 1),
            Violation::RadiiNotDecreasing { index } => {
                write!(f, "radius {} is not smaller than radius {}", index + 1, index)
            }
            Violation::NonPositiveSigma { index } => {
                write!(f, "conductivity {} is not positive", index + 1)
            }
            Violation::AdjacentEqualConductivity { layer } => {
                write!(f, "layer {layer} has the same conductivity as layer {}", layer - 1)
            }
            Violation::ZeroSpeed { curve } => write!(f, "curve {} has vanishing speed", curve + 1),
            Violation::SelfIntersecting { curve } => write!(f, "curve {} self-intersects", curve + 1),
            Violation::Clockwise { curve } => write!(f, "curve {} is clockwise", curve + 1),
            Violation::NotNested { outer, inner } => {
                write!(f, "curve {} does not enclose curve {}", outer + 1, inner + 1)
            }
            Violation::CurvesTouch { outer, inner } => {
                write!(f, "curves {} and {} touch", outer + 1, inner + 1)
            }
        }
    }
}

pub(crate) fn violations_to_error(violations: Vec<Violation>) -> Result<()> {
    if let Some(v) = violations.first() {
        if let Violation::AdjacentEqualConductivity { layer } = v {
            if violations.len() == 1 {
                return Err(Error::AdjacentEqualConductivity(layer - 1, *layer));
            }
        }
        let msg = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(Error::InvalidStructure(msg));
    }
    Ok(())
}

pub(crate) fn sigma_violations(sigmas: &[f64]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut previous = 1.0;
    for (index, &s) in sigmas.iter().enumerate() {
        if !s.is_finite() {
            out.push(Violation::NonFinite { field: "sigmas".into(), index });
        } else if s <= 0.0 {
            out.push(Violation::NonPositiveSigma { index });
        } else if s == previous {
            out.push(Violation::AdjacentEqualConductivity { layer: index + 1 });
        }
        previous = s;
    }
    out
}

/// Nested concentric disks with radii `r_1 > ... > r_N` and conductivities
/// `sigma_1..sigma_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentricDisks {
    pub radii: Vec<f64>,
    pub sigmas: Vec<f64>,
    #[serde(default = "Point::zeros")]
    pub center: Point,
}

impl ConcentricDisks {
    pub fn new(radii: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        Self::with_center(radii, sigmas, Point::zeros())
    }

    pub fn with_center(radii: Vec<f64>, sigmas: Vec<f64>, center: Point) -> Result<Self> {
        let disks = ConcentricDisks { radii, sigmas, center };
        violations_to_error(disks.validate())?;
        Ok(disks)
    }

    /// Builds the structure without checking invariants. Used for
    /// zero-contrast limits and for trial points inside optimizers.
    pub fn new_unchecked(radii: Vec<f64>, sigmas: Vec<f64>, center: Point) -> Self {
        ConcentricDisks { radii, sigmas, center }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.radii.is_empty() && self.sigmas.is_empty() {
            out.push(Violation::Empty);
            return out;
        }
        if self.radii.len() != self.sigmas.len() {
            out.push(Violation::LengthMismatch { radii: self.radii.len(), sigmas: self.sigmas.len() });
        }
        for (index, &r) in self.radii.iter().enumerate() {
            if !r.is_finite() {
                out.push(Violation::NonFinite { field: "radii".into(), index });
            } else if r <= 0.0 {
                out.push(Violation::NonPositiveRadius { index });
            } else if index > 0 && r >= self.radii[index - 1] {
                out.push(Violation::RadiiNotDecreasing { index });
            }
        }
        if !self.center.iter().all(|c| c.is_finite()) {
            out.push(Violation::NonFinite { field: "center".into(), index: 0 });
        }
        out.extend(sigma_violations(&self.sigmas));
        out
    }

    pub fn outer_radius(&self) -> f64 {
        self.radii[0]
    }

    pub fn translated(&self, shift: Point) -> Self {
        ConcentricDisks { center: self.center + shift, ..self.clone() }
    }

    /// Renders each interface as a circular [`SmoothCurve`].
    pub fn to_shape(&self, nodes: usize) -> LayeredShape {
        let curves = self.radii.iter().map(|&r| SmoothCurve::circle(self.center, r).with_nodes(nodes)).collect();
        LayeredShape::new_unchecked(curves, self.sigmas.clone())
    }
}

impl Layered for ConcentricDisks {
    fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

/// Contrast parameters `lambda_k = (sigma_k + sigma_{k-1}) / (2 (sigma_k - sigma_{k-1}))`
/// with `sigma_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrasts {
    pub lambdas: Vec<f64>,
}

impl Contrasts {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Inverts the contrast map layer by layer, starting from `sigma_0 = 1`.
    pub fn to_sigmas(&self) -> Result<Vec<f64>> {
        let mut previous = 1.0;
        let mut out = Vec::with_capacity(self.lambdas.len());
        for (k, &l) in self.lambdas.iter().enumerate() {
            let s = previous * (2.0 * l + 1.0) / (2.0 * l - 1.0);
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::NonPhysicalEstimate(format!("lambda_{} = {l} gives conductivity {s}", k + 1)));
            }
            out.push(s);
            previous = s;
        }
        Ok(out)
    }
}

impl std::ops::Index<usize> for Contrasts {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.lambdas[k]
    }
}

pub fn contrast(sigma: f64, sigma_outer: f64) -> f64 {
    (sigma + sigma_outer) / (2.0 * (sigma - sigma_outer))
}

pub fn contrasts_of<S: Layered + ?Sized>(structure: &S) -> Result<Contrasts> {
    let mut previous = 1.0;
    let mut lambdas = Vec::with_capacity(structure.layer_count());
    for (k, &s) in structure.sigmas().iter().enumerate() {
        if s == previous {
            return Err(Error::AdjacentEqualConductivity(k, k + 1));
        }
        lambdas.push(contrast(s, previous));
        previous = s;
    }
    Ok(Contrasts { lambdas })
}
