use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::extract::{design_matrix, visible_orders};
use super::MeasurementSet;
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, numeric_jacobian, LmOptions};
use crate::model::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub center: Point,
    /// Fitted dipole moment `p`, with `u - H ~ -(x - z).p / (2 pi |x - z|^2)`.
    pub dipole: Point,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Projects `s` onto the orthogonal complement of the columns of `a`.
/// Returns the residual and the least-squares coefficients.
fn project_out(a: &DMatrix<f64>, s: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
        return None;
    }
    let mut scaled = a.clone();
    for (c, n) in norms.iter().enumerate() {
        scaled.column_mut(c).scale_mut(1.0 / n);
    }
    let qr = scaled.clone().qr();
    let rd = qr.r().diagonal().abs();
    let y = if rd.min() > 1e-10 * rd.max() {
        let q = qr.q();
        let qts = q.transpose() * s;
        qr.r().solve_upper_triangular(&qts)?
    } else {
        scaled.clone().svd(true, true).solve(s, 1e-12).ok()?
    };
    let r = s - &scaled * &y;
    let coef = DVector::from_iterator(y.len(), y.iter().zip(&norms).map(|(y, n)| y / n));
    Some((r, coef))
}

fn dipole_columns(points: &[Point], z: &Point) -> Option<DMatrix<f64>> {
    let mut a = DMatrix::zeros(points.len(), 2);
    for (i, p) in points.iter().enumerate() {
        let d = p - z;
        let q = d.norm_squared();
        if !(q > 0.0) {
            return None;
        }
        a[(i, 0)] = -d[0] / (2.0 * PI * q);
        a[(i, 1)] = -d[1] / (2.0 * PI * q);
    }
    Some(a)
}

fn inside(m: &MeasurementSet, z: &Point) -> bool {
    (z - m.enclosing_center).norm() < m.enclosing_radius
}

/// Variable-projection fit of a center `z`: the linear coefficients are
/// eliminated for each `z` and Levenberg–Marquardt runs on `z` alone.
fn fit_center<F>(
    m: &MeasurementSet,
    s: &DVector<f64>,
    start: Point,
    columns: F,
) -> Option<(Point, DVector<f64>, f64, usize, bool)>
where
    F: Fn(&Point) -> Option<DMatrix<f64>>,
{
    let h = 1e-7 * m.enclosing_radius;
    let mut residual = |x: &DVector<f64>| {
        let z = Point::new(x[0], x[1]);
        if !inside(m, &z) {
            return None;
        }
        project_out(&columns(&z)?, s).map(|(r, _)| r)
    };
    let model = |x: &DVector<f64>| {
        let r = residual(x)?;
        let j = numeric_jacobian(&mut residual, x, &[h, h])?;
        Some((r, j))
    };
    let options =
        LmOptions { max_iterations: 100, step_tolerance: 1e-13, cost_tolerance: 1e-24, ..LmOptions::default() };
    let report = levenberg_marquardt(model, DVector::from_vec(vec![start[0], start[1]]), &options)?;
    let z = Point::new(report.params[0], report.params[1]);
    let (r, coef) = project_out(&columns(&z)?, s)?;
    let rms = (r.norm_squared() / s.len() as f64).sqrt();
    Some((z, coef, rms, report.iterations, report.converged))
}

fn starts(m: &MeasurementSet) -> Vec<Point> {
    let c = m.enclosing_center;
    let r = m.enclosing_radius;
    let mut out = vec![c];
    for (ring, count) in [(0.35, 6), (0.7, 10)] {
        for k in 0..count {
            let t = 2.0 * PI * k as f64 / count as f64;
            out.push(c + Point::new(ring * r * t.cos(), ring * r * t.sin()));
        }
    }
    out
}

/// Locates the inclusion from the leading dipole term of `u - H`, using a
/// multi-start search inside the enclosing circle.
pub fn locate(m: &MeasurementSet) -> Result<Location> {
    m.validate()?;
    if m.background.is_constant() && m.tabulated.is_none() {
        return Err(Error::DegenerateDipole);
    }
    let s = m.scattered();
    let peak = m.values.iter().fold(0.0f64, |a, u| a.max(u.abs())).max(f64::MIN_POSITIVE);
    if s.amax() <= 1e-12 * peak {
        return Err(Error::DegenerateDipole);
    }
    let fits: Vec<_> =
        starts(m).into_par_iter().filter_map(|z0| fit_center(m, &s, z0, |z| dipole_columns(&m.points, z))).collect();
    let best = fits.into_iter().min_by(|a, b| a.2.total_cmp(&b.2)).ok_or(Error::NoConvergence(0))?;
    let (center, coef, residual_rms, iterations, converged) = best;
    if !converged {
        return Err(Error::NoConvergence(iterations));
    }
    let dipole = Point::new(coef[0], coef[1]);
    let model_rms = {
        let a = dipole_columns(&m.points, &center).ok_or(Error::DegenerateDipole)?;
        ((&a * &coef).norm_squared() / s.len() as f64).sqrt()
    };
    if model_rms <= 1e-12 * peak {
        return Err(Error::DegenerateDipole);
    }
    Ok(Location { center, dipole, residual_rms, iterations, converged })
}

/// Evenly strided subset of at most `limit` samples.
fn subsample(m: &MeasurementSet, limit: usize) -> MeasurementSet {
    if m.len() <= limit {
        return m.clone();
    }
    let stride = m.len().div_ceil(limit);
    let keep: Vec<usize> = (0..m.len()).step_by(stride).collect();
    MeasurementSet {
        points: keep.iter().map(|&i| m.points[i]).collect(),
        values: keep.iter().map(|&i| m.values[i]).collect(),
        background: m.background.clone(),
        tabulated: m.tabulated.as_ref().map(|h| keep.iter().map(|&i| h[i]).collect()),
        enclosing_center: m.enclosing_center,
        enclosing_radius: m.enclosing_radius,
        noise: m.noise,
    }
}

fn multipole_columns(m: &MeasurementSet, n_max: usize) -> impl Fn(&Point) -> Option<DMatrix<f64>> + Sync + '_ {
    move |z: &Point| {
        let local = m.background.recentered(z);
        let orders = visible_orders(&m.background, z, n_max);
        if orders.is_empty() {
            return None;
        }
        Some(design_matrix(&m.points, z, &local, &orders))
    }
}

/// Complex exterior coefficients `beta_k` with `u - H = Re sum_k beta_k conj(w)^{-k}`
/// about the enclosing center, `k = 1..=orders`.
fn exterior_coefficients(m: &MeasurementSet, orders: usize) -> Option<Vec<Complex64>> {
    let c = m.enclosing_center;
    let mut a = DMatrix::zeros(m.len(), 2 * orders);
    for (i, p) in m.points.iter().enumerate() {
        let inv = Complex64::new(p[0] - c[0], c[1] - p[1]).inv();
        let mut q = inv;
        for k in 0..orders {
            a[(i, 2 * k)] = q.re;
            a[(i, 2 * k + 1)] = -q.im;
            q *= inv;
        }
    }
    let (_, b) = project_out(&a, &m.scattered())?;
    Some((0..orders).map(|k| Complex64::new(b[2 * k], b[2 * k + 1])).collect())
}

/// Coefficients about `center + shift`, from those about `center`.
fn translate(beta: &[Complex64], shift: Complex64, orders: usize) -> Vec<Complex64> {
    let zc = -shift.conj();
    (1..=orders)
        .map(|n| (1..=n.min(beta.len())).map(|k| beta[k - 1] * binomial(n - 1, n - k) * zc.powu((n - k) as u32)).sum())
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// For a concentric structure about `z`, each `gamma_n(z)` is a real
/// multiple of `A_n(z)`. Returns the components violating that for the
/// lowest orders, scaled to field units at the sampling radius.
fn concentric_defect(
    m: &MeasurementSet,
    beta: &[Complex64],
    z: &Point,
    orders: usize,
    radius: f64,
) -> Option<DVector<f64>> {
    if !inside(m, z) {
        return None;
    }
    let c = m.enclosing_center;
    let gamma = translate(beta, Complex64::new(z[0] - c[0], z[1] - c[1]), orders);
    let local = m.background.recentered(z);
    let mut out = DVector::zeros(2 * orders);
    for n in 1..=orders {
        let a = local.complex_coefficient(n);
        let g = gamma[n - 1];
        let r = if a.norm() > 0.0 {
            let u = a / a.norm();
            g - u * (g * u.conj()).re
        } else {
            g
        };
        let scale = radius.powi(-(n as i32));
        out[2 * (n - 1)] = r.re * scale;
        out[2 * (n - 1) + 1] = r.im * scale;
    }
    Some(out)
}

/// Center of a concentric structure from the full multipole series up to
/// `n_max`; exact for concentric disks whatever the background order.
///
/// The sample-space misfit is a shallow trench (the curve where the dipole
/// is parallel to the background gradient) with the true center a narrow
/// well inside it, so descent from the dipole estimate `start` is
/// unreliable. Candidates therefore come from the low-order concentric
/// conditions on translated exterior coefficients, solved from a grid of
/// starts; the best are polished against the full series, first on a
/// strided subsample and then on every sample.
pub fn refine_center(m: &MeasurementSet, start: &Point, n_max: usize) -> Result<Location> {
    m.validate()?;
    let n_max = n_max.min((m.len().saturating_sub(1)) / 2).max(1);
    let coarse = subsample(m, 512.max(4 * n_max + 2));
    let cs = coarse.scattered();
    let coarse_columns = multipole_columns(&coarse, n_max);
    let radius = coarse.points.iter().map(|p| (p - coarse.enclosing_center).norm()).fold(f64::INFINITY, f64::min);

    let mut candidates = vec![*start];
    // translation about an off-center point spreads the field over all
    // orders, so the exterior fit takes as many as the data supports
    let orders = ((coarse.len() - 1) / 2).clamp(1, 24);
    if let Some(beta) = exterior_coefficients(&coarse, orders) {
        let low = orders.min(4);
        let steps: i64 = 12;
        let h = coarse.enclosing_radius / steps as f64;
        let mut grid = vec![*start];
        for i in -steps..=steps {
            for j in -steps..=steps {
                let z = coarse.enclosing_center + Point::new(i as f64 * h, j as f64 * h);
                if (z - coarse.enclosing_center).norm() < 0.95 * coarse.enclosing_radius {
                    grid.push(z);
                }
            }
        }
        let step = 1e-7 * coarse.enclosing_radius;
        let options = LmOptions { max_iterations: 60, ..LmOptions::default() };
        let mut roots: Vec<(Point, f64)> = grid
            .into_par_iter()
            .filter_map(|z0| {
                let mut f = |x: &DVector<f64>| concentric_defect(&coarse, &beta, &Point::new(x[0], x[1]), low, radius);
                let model = |x: &DVector<f64>| {
                    let r = f(x)?;
                    let j = numeric_jacobian(&mut f, x, &[step, step])?;
                    Some((r, j))
                };
                let rep = levenberg_marquardt(model, DVector::from_vec(vec![z0[0], z0[1]]), &options)?;
                Some((Point::new(rep.params[0], rep.params[1]), rep.cost))
            })
            .collect();
        roots.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut distinct: Vec<Point> = Vec::new();
        for (z, _) in roots {
            if distinct.iter().all(|q| (q - z).norm() > 1e-6 * coarse.enclosing_radius) {
                distinct.push(z);
            }
            if distinct.len() == 8 {
                break;
            }
        }
        candidates.extend(distinct);
    }
    let best = candidates
        .into_par_iter()
        .filter_map(|z| fit_center(&coarse, &cs, z, &coarse_columns))
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .ok_or(Error::NoConvergence(0))?;

    let s = m.scattered();
    let (center, _, residual_rms, iterations, converged) = if coarse.len() == m.len() {
        best
    } else {
        fit_center(m, &s, best.0, multipole_columns(m, n_max)).ok_or(Error::NoConvergence(0))?
    };
    if !converged {
        return Err(Error::NoConvergence(iterations));
    }
    let dipole = {
        let a = dipole_columns(&m.points, &center).ok_or(Error::DegenerateDipole)?;
        let (_, p) = project_out(&a, &s).ok_or(Error::DegenerateDipole)?;
        Point::new(p[0], p[1])
    };
    Ok(Location { center, dipole, residual_rms, iterations, converged })
}
