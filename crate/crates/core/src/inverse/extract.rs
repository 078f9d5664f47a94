use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::MeasurementSet;
use crate::disks::MultipoleSpectrum;
use crate::error::{Error, Result};
use crate::model::{HarmonicBackground, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractOptions {
    /// Largest admissible condition number of the column-normalized design.
    pub max_condition: f64,
    /// Tikhonov weight on the column-normalized unknowns (0 disables).
    pub ridge: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { max_condition: 1e12, ridge: 0.0 }
    }
}

/// Fitted multipole coefficients with their standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub spectrum: MultipoleSpectrum,
    pub uncertainties: BTreeMap<usize, f64>,
    /// Root-mean-square misfit of the fitted series.
    pub residual_rms: f64,
    /// Standard deviation assumed for each sample when propagating errors.
    pub data_sigma: f64,
    pub condition: f64,
}

/// Orders `1..=n_max` at which the background, expanded about `center`,
/// has a nonzero coefficient. Only those orders are visible in the data.
pub fn visible_orders(h: &HarmonicBackground, center: &Point, n_max: usize) -> Vec<usize> {
    let local = h.recentered(center);
    local.orders().map(|(n, _)| n).filter(|&n| n <= n_max).collect()
}

/// Design columns `Re(A_n conj(w)^{-n})` at offsets `w = x - center`.
pub(crate) fn design_matrix(
    points: &[Point],
    center: &Point,
    local: &HarmonicBackground,
    orders: &[usize],
) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(points.len(), orders.len());
    for (i, p) in points.iter().enumerate() {
        let inv = Complex64::new(p[0] - center[0], center[1] - p[1]).inv();
        for (c, &n) in orders.iter().enumerate() {
            a[(i, c)] = (local.complex_coefficient(n) * inv.powu(n as u32)).re;
        }
    }
    a
}

pub fn extract_multipoles(m: &MeasurementSet, center: &Point, n_max: usize) -> Result<Extraction> {
    extract_multipoles_with(m, center, n_max, &ExtractOptions::default())
}

/// Least-squares fit of `u - H = sum_n c_n Re(A_n e^{i n theta}) / r^n` about
/// `center`, for the orders up to `n_max` present in the background.
pub fn extract_multipoles_with(
    m: &MeasurementSet,
    center: &Point,
    n_max: usize,
    options: &ExtractOptions,
) -> Result<Extraction> {
    if n_max == 0 {
        return Err(Error::InvalidMeasurement("n_max must be at least 1".into()));
    }
    m.validate()?;
    m.require_orders(n_max)?;
    let local = m.background.recentered(center);
    let orders = visible_orders(&m.background, center, n_max);
    if orders.is_empty() {
        return Err(Error::InvalidMeasurement(format!("background has no harmonic orders up to {n_max}")));
    }
    let a = design_matrix(&m.points, center, &local, &orders);
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::IllConditionedFit(f64::INFINITY));
    }
    let mut normalized = a;
    for (c, s) in norms.iter().enumerate() {
        normalized.column_mut(c).scale_mut(1.0 / s);
    }
    let s = m.scattered();
    let svd = normalized.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= options.max_condition) {
        return Err(Error::IllConditionedFit(condition));
    }
    let u = svd.u.as_ref().expect("left vectors requested");
    let vt = svd.v_t.as_ref().expect("right vectors requested");
    // filter factors: plain least squares, or Tikhonov when ridge > 0
    let filt: Vec<f64> = sv.iter().map(|&x| x / (x * x + options.ridge)).collect();
    let utb = u.transpose() * &s;
    let q = orders.len();
    let mut y = DVector::zeros(q);
    for k in 0..q {
        for j in 0..q {
            y[j] += vt[(k, j)] * filt[k] * utb[k];
        }
    }
    let fitted = &normalized * &y;
    let residual = &s - fitted;
    let dof = (m.len().saturating_sub(q)).max(1) as f64;
    let residual_rms = (residual.norm_squared() / m.len() as f64).sqrt();
    let data_sigma = (residual.norm_squared() / dof).sqrt().max(m.noise.unwrap_or(0.0)).max(m.rounding_floor());

    let mut spectrum = MultipoleSpectrum::new(*center);
    let mut uncertainties = BTreeMap::new();
    for (j, &n) in orders.iter().enumerate() {
        spectrum.values.insert(n, y[j] / norms[j]);
        let var: f64 = (0..q).map(|k| (vt[(k, j)] * filt[k]).powi(2)).sum();
        uncertainties.insert(n, data_sigma * var.sqrt() / norms[j]);
    }
    Ok(Extraction { spectrum, uncertainties, residual_rms, data_sigma, condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disks::{field_eval, multipole};
    use crate::model::ConcentricDisks;

    pub(crate) fn synthetic(
        d: &ConcentricDisks,
        h: &HarmonicBackground,
        radius: f64,
        count: usize,
        arc: f64,
    ) -> MeasurementSet {
        let points: Vec<Point> = (0..count)
            .map(|k| {
                let t = arc * k as f64 / count as f64;
                Point::new(radius * t.cos(), radius * t.sin())
            })
            .collect();
        let values = points.iter().map(|p| h.eval(p) + field_eval(d, h, p).unwrap()).collect();
        MeasurementSet::new(points, values, h.clone(), Point::zeros(), d.outer_radius() * 1.05).unwrap()
    }

    fn background(orders: usize, radius: f64) -> HarmonicBackground {
        (1..=orders).fold(HarmonicBackground::constant(0.0), |h, n| h.with_term(n, radius.powi(-(n as i32)), 0.0))
    }

    #[test]
    fn full_circle_round_trip() {
        let d = ConcentricDisks::new(vec![1.0, 0.6, 0.3], vec![2.0, 5.0, 0.5]).unwrap();
        let h = background(6, 3.0);
        let m = synthetic(&d, &h, 3.0, 256, 2.0 * std::f64::consts::PI);
        let e = extract_multipoles(&m, &Point::zeros(), 6).unwrap();
        for n in 1..=6 {
            let c = multipole(&d, n).unwrap();
            let got = e.spectrum.get(n).unwrap();
            assert!((got - c).abs() <= 1e-10 * c.abs().max(1e-3), "n={n}: {got} vs {c}");
            assert!((got - c).abs() <= 10.0 * e.uncertainties[&n] + 1e-14);
        }
        assert!(e.condition < 10.0);
    }

    #[test]
    fn no_inclusion_gives_zero_spectrum() {
        let h = background(4, 2.0);
        let points: Vec<Point> =
            (0..64).map(|k| Point::new(2.0 * (k as f64 * 0.1).cos(), 2.0 * (k as f64 * 0.1).sin())).collect();
        let values = points.iter().map(|p| h.eval(p)).collect();
        let m = MeasurementSet::new(points, values, h, Point::zeros(), 1.0).unwrap();
        let e = extract_multipoles(&m, &Point::zeros(), 4).unwrap();
        assert!(e.spectrum.values.values().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn only_visible_orders_are_fitted() {
        let d = ConcentricDisks::new(vec![1.0], vec![3.0]).unwrap();
        let h = HarmonicBackground::linear_x().with_term(3, 0.1, 0.0);
        let m = synthetic(&d, &h, 2.0, 64, 2.0 * std::f64::consts::PI);
        let e = extract_multipoles(&m, &Point::zeros(), 5).unwrap();
        assert_eq!(e.spectrum.orders().collect::<Vec<_>>(), vec![1, 3]);
        assert!((e.spectrum.get(1).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn short_arc_high_order_is_rejected() {
        let d = ConcentricDisks::new(vec![1.0], vec![3.0]).unwrap();
        let h = background(30, 2.0);
        let m = synthetic(&d, &h, 2.0, 200, 0.05);
        assert!(matches!(extract_multipoles(&m, &Point::zeros(), 30), Err(Error::IllConditionedFit(_))));
    }
}
