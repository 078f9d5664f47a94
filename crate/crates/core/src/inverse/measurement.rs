use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HarmonicBackground, Point};

/// Samples of the total potential `u` outside a declared enclosing circle,
/// together with the background `H` that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    pub background: HarmonicBackground,
    /// Background values at the sample points when `H` was given as a
    /// table; `background` then holds a harmonic fit to them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabulated: Option<Vec<f64>>,
    pub enclosing_center: Point,
    pub enclosing_radius: f64,
    /// Standard deviation of the additive noise, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
}

impl MeasurementSet {
    pub fn new(
        points: Vec<Point>,
        values: Vec<f64>,
        background: HarmonicBackground,
        enclosing_center: Point,
        enclosing_radius: f64,
    ) -> Result<Self> {
        let m = MeasurementSet {
            points,
            values,
            background,
            tabulated: None,
            enclosing_center,
            enclosing_radius,
            noise: None,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a measurement set from tabulated background values, fitting a
    /// harmonic polynomial of degree `max_degree` to them.
    pub fn from_tabulated(
        points: Vec<Point>,
        values: Vec<f64>,
        h_values: Vec<f64>,
        enclosing_center: Point,
        enclosing_radius: f64,
        max_degree: usize,
    ) -> Result<Self> {
        if h_values.len() != points.len() {
            return Err(Error::InvalidMeasurement(format!(
                "{} background values for {} points",
                h_values.len(),
                points.len()
            )));
        }
        let background = fit_background(&points, &h_values, max_degree)?;
        let m = MeasurementSet {
            points,
            values,
            background,
            tabulated: Some(h_values),
            enclosing_center,
            enclosing_radius,
            noise: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise = Some(sigma);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.values.len() {
            return Err(Error::InvalidMeasurement(format!(
                "{} points but {} values",
                self.points.len(),
                self.values.len()
            )));
        }
        if self.points.is_empty() {
            return Err(Error::InvalidMeasurement("no samples".into()));
        }
        if !(self.enclosing_radius > 0.0 && self.enclosing_radius.is_finite()) {
            return Err(Error::InvalidMeasurement(format!(
                "enclosing radius {} is not positive",
                self.enclosing_radius
            )));
        }
        for (i, (p, u)) in self.points.iter().zip(&self.values).enumerate() {
            if !(p[0].is_finite() && p[1].is_finite() && u.is_finite()) {
                return Err(Error::InvalidMeasurement(format!("sample {i} is not finite")));
            }
            if (p - self.enclosing_center).norm() <= self.enclosing_radius {
                return Err(Error::InvalidMeasurement(format!(
                    "sample {i} at ({}, {}) is inside the enclosing circle",
                    p[0], p[1]
                )));
            }
        }
        Ok(())
    }

    /// Requires at least `2 n_max + 1` samples for extraction up to `n_max`.
    pub fn require_orders(&self, n_max: usize) -> Result<()> {
        if self.len() < 2 * n_max + 1 {
            return Err(Error::InvalidMeasurement(format!(
                "{} samples cannot resolve orders up to {n_max} (need {})",
                self.len(),
                2 * n_max + 1
            )));
        }
        Ok(())
    }

    /// Background values at the sample points.
    pub fn background_values(&self) -> Vec<f64> {
        match &self.tabulated {
            Some(h) => h.clone(),
            None => self.points.iter().map(|p| self.background.eval(p)).collect(),
        }
    }

    /// `u - H` at the sample points.
    pub fn scattered(&self) -> DVector<f64> {
        let h = self.background_values();
        DVector::from_iterator(self.len(), self.values.iter().zip(&h).map(|(u, h)| u - h))
    }

    /// Rounding-level floor for the data: machine epsilon times the largest
    /// sample magnitude.
    pub fn rounding_floor(&self) -> f64 {
        f64::EPSILON * self.values.iter().fold(0.0f64, |m, u| m.max(u.abs()))
    }
}

/// Least-squares harmonic polynomial (about the origin) through tabulated
/// background values. Coefficients below `1e-13` of the largest, measured at
/// the farthest sample, are dropped so that exact-zero patterns survive.
fn fit_background(points: &[Point], h: &[f64], max_degree: usize) -> Result<HarmonicBackground> {
    let cols = 1 + 2 * max_degree;
    if points.len() < cols {
        return Err(Error::InvalidMeasurement(format!(
            "{} samples cannot determine a degree-{max_degree} background",
            points.len()
        )));
    }
    // scale by the farthest sample so columns stay O(1)
    let scale = points.iter().map(|p| p.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let a = DMatrix::from_fn(points.len(), cols, |i, c| {
        if c == 0 {
            return 1.0;
        }
        let n = c.div_ceil(2);
        let w = Complex64::new(points[i][0], points[i][1]) / scale;
        let z = w.powu(n as u32);
        if c % 2 == 1 {
            z.re
        } else {
            z.im
        }
    });
    let b = DVector::from_column_slice(h);
    let x = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::InvalidMeasurement(format!("background fit failed: {e}")))?;
    let largest = x.iter().skip(1).fold(0.0f64, |m, v| m.max(v.abs()));
    let mut h = HarmonicBackground::constant(x[0]);
    for n in 1..=max_degree {
        let s = scale.powi(n as i32);
        let (ac, as_) = (x[2 * n - 1], x[2 * n]);
        let keep = |v: f64| if v.abs() > 1e-13 * largest { v / s } else { 0.0 };
        let (ac, as_) = (keep(ac), keep(as_));
        if ac != 0.0 || as_ != 0.0 {
            h = h.with_term(n, ac, as_);
        }
    }
    Ok(h)
}
