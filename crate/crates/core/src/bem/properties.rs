use serde::{Deserialize, Serialize};

use super::gpt::{gpt, GptTable};
use super::system::BlockNpSystem;
use crate::error::{Error, Result};
use crate::model::ConcentricDisks;
use crate::poly::Polynomial;

const HARMONIC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    /// `max |sum a_alpha b_beta M_{alpha beta} - sum a_alpha b_beta M_{beta alpha}|`
    pub max_abs: f64,
    /// The same, each pair divided by `sum |a_alpha b_beta M_{alpha beta}|`.
    pub max_rel: f64,
}

/// Lower bound `L`, quadratic form `s` and upper bound `U` of the positivity
/// sandwich `L <= s <= U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub form: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_gap: f64,
    pub upper_gap: f64,
}

fn check_harmonic(index: usize, p: &Polynomial) -> Result<()> {
    let r = p.harmonic_residual();
    if r > HARMONIC_TOLERANCE {
        return Err(Error::NonHarmonicCoefficients(index, r));
    }
    Ok(())
}

pub fn symmetry_of_table(table: &GptTable, pairs: &[(Polynomial, Polynomial)]) -> Result<SymmetryReport> {
    let mut report = SymmetryReport { max_abs: 0.0, max_rel: 0.0 };
    for (i, (a, b)) in pairs.iter().enumerate() {
        check_harmonic(2 * i, a)?;
        check_harmonic(2 * i + 1, b)?;
        let diff = (table.contract(a, b) - table.contract(b, a)).abs();
        let scale = table.contract_abs(a, b).max(table.contract_abs(b, a));
        report.max_abs = report.max_abs.max(diff);
        if diff > 0.0 {
            report.max_rel = report.max_rel.max(diff / scale);
        }
    }
    Ok(report)
}

/// Checks `sum a_alpha b_beta M_{alpha beta} = sum a_alpha b_beta M_{beta alpha}`
/// for each harmonic pair `(a, b)`.
pub fn check_symmetry(system: &BlockNpSystem, pairs: &[(Polynomial, Polynomial)]) -> Result<SymmetryReport> {
    for (i, (a, b)) in pairs.iter().enumerate() {
        check_harmonic(2 * i, a)?;
        check_harmonic(2 * i + 1, b)?;
    }
    let degree = pairs.iter().map(|(a, b)| a.degree().max(b.degree())).max().unwrap_or(0);
    if degree == 0 {
        return Ok(SymmetryReport { max_abs: 0.0, max_rel: 0.0 });
    }
    symmetry_of_table(&gpt(system, degree)?, pairs)
}

/// `D_k = oint_{Gamma_k} f df/dnu`, which equals the Dirichlet energy of a
/// harmonic `f` over the region enclosed by `Gamma_k`.
fn enclosed_energies(system: &BlockNpSystem, f: &Polynomial) -> Vec<f64> {
    system
        .interfaces
        .iter()
        .map(|s| {
            s.points
                .iter()
                .zip(&s.normals)
                .zip(&s.weights)
                .map(|((y, n), w)| f.eval(y) * f.gradient(y).dot(n) * w)
                .sum()
        })
        .collect()
}

/// Energy of a harmonic `f` in each layer `A_k` (between `Gamma_k` and
/// `Gamma_{k+1}`), from boundary integrals.
pub fn layer_energies(system: &BlockNpSystem, f: &Polynomial) -> Vec<f64> {
    let d = enclosed_energies(system, f);
    (0..d.len()).map(|k| d[k] - d.get(k + 1).copied().unwrap_or(0.0)).collect()
}

/// Layer energies of a harmonic `f` for concentric disks by polar
/// tensor-product quadrature (Gauss–Legendre in `r`, trapezoid in `theta`).
pub fn disk_layer_energies(disks: &ConcentricDisks, f: &Polynomial, radial: usize, angular: usize) -> Vec<f64> {
    let (nodes, weights) = gauss_legendre(radial);
    let n = disks.radii.len();
    (0..n)
        .map(|k| {
            let outer = disks.radii[k];
            let inner = if k + 1 < n { disks.radii[k + 1] } else { 0.0 };
            let half = 0.5 * (outer - inner);
            let mut total = 0.0;
            for (x, w) in nodes.iter().zip(&weights) {
                let r = inner + half * (x + 1.0);
                for j in 0..angular {
                    let t = 2.0 * std::f64::consts::PI * j as f64 / angular as f64;
                    let p = disks.center + crate::model::Point::new(r * t.cos(), r * t.sin());
                    total += w * half * r * f.gradient(&p).norm_squared();
                }
            }
            total * 2.0 * std::f64::consts::PI / angular as f64
        })
        .collect()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the Legendre recurrence.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn sandwich(form: f64, energies: &[f64], sigmas: &[f64]) -> PositivityReport {
    let lower: f64 = energies.iter().zip(sigmas).map(|(e, s)| (s - 1.0) / s * e).sum();
    let upper: f64 = energies.iter().zip(sigmas).map(|(e, s)| (s - 1.0) * e).sum();
    PositivityReport { form, lower, upper, lower_gap: form - lower, upper_gap: upper - form }
}

/// Evaluates `s = sum a_alpha a_beta M_{alpha beta}` and the bounds
/// `L = sum (sigma_k - 1)/sigma_k int_{A_k} |grad f|^2`,
/// `U = sum (sigma_k - 1) int_{A_k} |grad f|^2`.
pub fn check_positivity(system: &BlockNpSystem, f: &Polynomial) -> Result<PositivityReport> {
    check_harmonic(0, f)?;
    let table = gpt(system, f.degree().max(1))?;
    Ok(sandwich(table.contract(f, f), &layer_energies(system, f), &system.sigmas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bem::assemble;
    use crate::model::{LayeredShape, Point, SmoothCurve};
    use crate::poly::MultiIndex;

    fn two_layer(sigmas: [f64; 2]) -> LayeredShape {
        LayeredShape::new(
            vec![SmoothCurve::ellipse(Point::zeros(), 1.0, 0.6, 0.3), SmoothCurve::circle(Point::new(0.1, 0.05), 0.35)],
            sigmas.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((integral - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn boundary_energies_match_polar_quadrature() {
        let disks = ConcentricDisks::new(vec![1.0, 0.6, 0.3], vec![2.0, 5.0, 0.5]).unwrap();
        let sys = assemble(&disks.to_shape(128), 128).unwrap();
        let f = Polynomial::cos_harmonic(3).add(&Polynomial::sin_harmonic(1));
        let boundary = layer_energies(&sys, &f);
        let polar = disk_layer_energies(&disks, &f, 16, 64);
        for (b, p) in boundary.iter().zip(&polar) {
            assert!((b - p).abs() < 1e-12 * p.abs().max(1.0), "{b} vs {p}");
        }
    }

    #[test]
    fn symmetry_on_ellipse() {
        let sys = assemble(&two_layer([3.0, 2.0]), 128).unwrap();
        let x = Polynomial::new([(MultiIndex(1, 0), 1.0)]);
        let y = Polynomial::new([(MultiIndex(0, 1), 1.0)]);
        let r = check_symmetry(&sys, &[(x.clone(), y.clone())]).unwrap();
        assert!(r.max_rel <= 1e-8);
        let same = check_symmetry(&sys, &[(x.clone(), x.clone())]).unwrap();
        assert_eq!(same.max_abs, 0.0);
        let r = check_symmetry(&sys, &[(Polynomial::cos_harmonic(2), Polynomial::sin_harmonic(3))]).unwrap();
        assert!(r.max_rel <= 1e-8);
        let bad = Polynomial::new([(MultiIndex(2, 0), 1.0)]);
        assert!(matches!(check_symmetry(&sys, &[(x, bad)]), Err(Error::NonHarmonicCoefficients(1, _))));
    }

    #[test]
    fn sandwich_holds_for_high_conductivity() {
        let sys = assemble(&two_layer([3.0, 7.0]), 128).unwrap();
        let f = Polynomial::new([(MultiIndex(1, 0), 1.0)]);
        let r = check_positivity(&sys, &f).unwrap();
        assert!(r.form > 0.0);
        assert!(r.lower_gap >= -1e-8 && r.upper_gap >= -1e-8, "{r:?}");
    }

    #[test]
    fn low_conductivity_form_is_negative() {
        let sys = assemble(&two_layer([0.5, 0.2]), 128).unwrap();
        let r = check_positivity(&sys, &Polynomial::cos_harmonic(2)).unwrap();
        assert!(r.form < 0.0);
        assert!(r.lower_gap >= -1e-8 && r.upper_gap >= -1e-8, "{r:?}");
    }

    #[test]
    fn zero_contrast_sandwich_collapses() {
        let eps = 1e-7;
        let sys = assemble(&two_layer([1.0 + eps, 1.0 + 2.0 * eps]), 64).unwrap();
        let r = check_positivity(&sys, &Polynomial::sin_harmonic(1)).unwrap();
        assert!(r.form.abs() < 1e2 * eps);
        assert!(r.lower_gap.abs() < 1e2 * eps && r.upper_gap.abs() < 1e2 * eps);
    }
}
