//! Closed-form solution for concentric disks.
//!
//! For each multipole order `n` the interface densities of a concentric
//! structure are `phi_k = Re(phi_k^n e^{i n theta})`, and outside the
//! structure `u - H = sum_n Re(A_n e^{i n theta}) c_n / r^n` with
//! `c_n = e^T Upsilon (M^{(n)})^{-1} e`, where `M^{(n)}` is the generalized
//! polarization matrix and `Upsilon = diag(r_k^{2n})`.

mod algebra;
mod neutral;

pub use algebra::{
    adjugate_col, adjugate_row, cert_matrices, det_l3_closed_form, det_r3_closed_form, k_term, l_term, CertMatrices,
};
pub use neutral::{hashin_shtrikman, neutral_shell};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::LuFactor;
use crate::model::{contrasts_of, ConcentricDisks, HarmonicBackground, Point};

/// Powers below this are flushed to zero, so that the matrix becomes
/// exactly triangular in the large-`n` limit.
const UNDERFLOW: f64 = 1e-300;

/// `(r_j / r_i)^{2n}` computed in log space.
pub(crate) fn ratio_power(r_j: f64, r_i: f64, n: usize) -> f64 {
    let v = (2.0 * n as f64 * (r_j.ln() - r_i.ln())).exp();
    if v < UNDERFLOW {
        0.0
    } else {
        v
    }
}

/// The `n`-th order generalized polarization matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gpm {
    pub order: usize,
    pub matrix: DMatrix<f64>,
    pub radii: Vec<f64>,
}

impl Gpm {
    /// Builds `M^{(n)}` from radii and contrasts directly: diagonal
    /// `-2 lambda_i`, strictly lower `-1`, strictly upper `(r_j/r_i)^{2n}`.
    pub fn from_parts(radii: &[f64], lambdas: &[f64], n: usize) -> Self {
        assert!(n >= 1, "multipole order must be at least 1");
        let size = radii.len();
        let matrix = DMatrix::from_fn(size, size, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => -2.0 * lambdas[i],
            std::cmp::Ordering::Greater => -1.0,
            std::cmp::Ordering::Less => ratio_power(radii[j], radii[i], n),
        });
        Gpm { order: n, matrix, radii: radii.to_vec() }
    }

    pub fn size(&self) -> usize {
        self.radii.len()
    }

    /// Diagonal of `Upsilon^{(n)} = diag(r_k^{2n})`.
    pub fn upsilon(&self) -> DVector<f64> {
        DVector::from_iterator(self.size(), self.radii.iter().map(|r| r.powi(2 * self.order as i32)))
    }

    /// `t_{i,j} = (r_j / r_i)^{2n}` for `i < j` (zero elsewhere).
    pub fn ratios(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.size(), self.size(), |i, j| if i < j { self.matrix[(i, j)] } else { 0.0 })
    }

    pub fn multipole(&self) -> Result<f64> {
        let x = LuFactor::new(self.matrix.clone())?.solve(&DVector::from_element(self.size(), 1.0));
        Ok(self.upsilon().dot(&x))
    }
}

pub fn gpm(disks: &ConcentricDisks, n: usize) -> Result<Gpm> {
    let lambdas = contrasts_of(disks)?.lambdas;
    Ok(Gpm::from_parts(&disks.radii, &lambdas, n))
}

/// `c_n` for the structure.
pub fn multipole(disks: &ConcentricDisks, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::IndexOutOfRange("multipole order must be at least 1".into()));
    }
    gpm(disks, n)?.multipole()
}

/// `c_n` together with its derivatives with respect to each `lambda_k` and
/// each `ln r_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipoleGradient {
    pub value: f64,
    pub d_lambda: Vec<f64>,
    pub d_log_radius: Vec<f64>,
}

pub fn multipole_with_gradient(radii: &[f64], lambdas: &[f64], n: usize) -> Result<MultipoleGradient> {
    let g = Gpm::from_parts(radii, lambdas, n);
    let size = g.size();
    let lu = LuFactor::new(g.matrix.clone())?;
    let ups = g.upsilon();
    let x = lu.solve(&DVector::from_element(size, 1.0));
    // y^T = e^T Upsilon M^{-1}
    let y = LuFactor::new(g.matrix.transpose())?.solve(&ups);
    let value = ups.dot(&x);
    let d_lambda = (0..size).map(|k| 2.0 * y[k] * x[k]).collect();
    let nf = n as f64;
    let d_log_radius = (0..size)
        .map(|k| {
            // d Upsilon_kk = 2n r_k^{2n}; dM_{ik} = 2n t_{ik} (i < k); dM_{kj} = -2n t_{kj} (k < j)
            let mut d = 2.0 * nf * ups[k] * x[k];
            for i in 0..k {
                d -= y[i] * 2.0 * nf * g.matrix[(i, k)] * x[k];
            }
            for j in k + 1..size {
                d += y[k] * 2.0 * nf * g.matrix[(k, j)] * x[j];
            }
            d
        })
        .collect();
    Ok(MultipoleGradient { value, d_lambda, d_log_radius })
}

/// Multipole coefficients `c_n` of a structure about its center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipoleSpectrum {
    pub center: Point,
    pub values: BTreeMap<usize, f64>,
}

impl MultipoleSpectrum {
    pub fn new(center: Point) -> Self {
        MultipoleSpectrum { center, values: BTreeMap::new() }
    }

    pub fn get(&self, n: usize) -> Option<f64> {
        self.values.get(&n).copied()
    }

    pub fn orders(&self) -> impl Iterator<Item = usize> + '_ {
        self.values.keys().copied()
    }

    pub fn max_order(&self) -> usize {
        self.values.keys().next_back().copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `c_n` for each requested order, evaluated in parallel.
pub fn multipole_spectrum(disks: &ConcentricDisks, orders: &[usize]) -> Result<MultipoleSpectrum> {
    let lambdas = contrasts_of(disks)?.lambdas;
    let values = orders
        .par_iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::IndexOutOfRange("multipole order must be at least 1".into()));
            }
            Ok((n, Gpm::from_parts(&disks.radii, &lambdas, n).multipole()?))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(MultipoleSpectrum { center: disks.center, values })
}

/// The density system matrix `E^{(n)}`: diagonal `2 lambda_i r_i^{1-n}`,
/// strictly lower `r_j^{1-n}`, strictly upper `-r_j^{n+1} r_i^{-2n}`.
/// Badly scaled for large `n`; meant for moderate orders.
pub fn e_matrix(radii: &[f64], lambdas: &[f64], n: usize) -> DMatrix<f64> {
    let size = radii.len();
    let p = n as i32;
    DMatrix::from_fn(size, size, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 2.0 * lambdas[i] * radii[i].powi(1 - p),
        std::cmp::Ordering::Greater => radii[j].powi(1 - p),
        std::cmp::Ordering::Less => -radii[j].powi(p + 1) * radii[i].powi(-2 * p),
    })
}

/// Solves `E^{(n)} phi = 2 n a e`: the complex density amplitudes, so that
/// the density on interface `k` is `Re(phi_k e^{i n theta})` for the
/// background `Re(a zeta^n)` about the structure's center.
pub fn density_coefficients(disks: &ConcentricDisks, n: usize, a: Complex64) -> Result<Vec<Complex64>> {
    if n == 0 {
        return Err(Error::IndexOutOfRange("multipole order must be at least 1".into()));
    }
    let lambdas = contrasts_of(disks)?.lambdas;
    let e = e_matrix(&disks.radii, &lambdas, n);
    let x = LuFactor::new(e)?.solve(&DVector::from_element(disks.radii.len(), 1.0));
    Ok(x.iter().map(|v| a * (2.0 * n as f64 * v)).collect())
}

/// Density on interface `k` (0-based) at angle `theta` for background `h`.
pub fn density_at(disks: &ConcentricDisks, h: &HarmonicBackground, k: usize, theta: f64) -> Result<f64> {
    let local = h.recentered(&disks.center);
    let mut total = 0.0;
    for (n, a) in local.orders() {
        let phi = density_coefficients(disks, n, a)?;
        total += (phi[k] * Complex64::from_polar(1.0, n as f64 * theta)).re;
    }
    Ok(total)
}

/// `(u - H)(x)` outside the structure, summed over the finitely many orders
/// of `h` (re-expanded about the structure's center).
pub fn field_eval(disks: &ConcentricDisks, h: &HarmonicBackground, x: &Point) -> Result<f64> {
    let w = x - disks.center;
    if w.norm() <= disks.outer_radius() {
        return Err(Error::PointInsideInclusion(x[0], x[1]));
    }
    let local = h.recentered(&disks.center);
    let orders: Vec<usize> = local.orders().map(|(n, _)| n).collect();
    let spectrum = multipole_spectrum(disks, &orders)?;
    Ok(eval_series(&spectrum, &local, &w))
}

/// `sum_n Re(A_n e^{i n theta}) c_n / r^n` at offset `w` from the center,
/// with `local` already expanded about that center.
pub(crate) fn eval_series(spectrum: &MultipoleSpectrum, local: &HarmonicBackground, w: &Point) -> f64 {
    // e^{i n theta} / r^n = conj(w)^{-n}
    let inv = Complex64::new(w[0], -w[1]).inv();
    local.orders().map(|(n, a)| spectrum.get(n).map_or(0.0, |c| c * (a * inv.powu(n as u32)).re)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn three_layer() -> ConcentricDisks {
        ConcentricDisks::new(vec![1.0, 0.6, 0.3], vec![2.0, 5.0, 0.5]).unwrap()
    }

    #[test]
    fn single_disk_oracle() {
        let d = ConcentricDisks::new(vec![1.0], vec![3.0]).unwrap();
        assert_eq!(gpm(&d, 1).unwrap().matrix[(0, 0)], -2.0);
        assert_eq!(multipole(&d, 1).unwrap(), -0.5);
        let u = field_eval(&d, &HarmonicBackground::linear_x(), &Point::new(2.0, 0.0)).unwrap();
        assert_eq!(u, -0.25);
        let phi = density_coefficients(&d, 1, Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(phi[0], Complex64::new(1.0, 0.0));
        assert!(density_coefficients(&d, 3, Complex64::new(0.0, 0.0)).unwrap()[0] == Complex64::new(0.0, 0.0));
    }

    #[test]
    fn gpm_entries() {
        let d = ConcentricDisks::new(vec![1.0, 0.5], vec![4.0, 0.3]).unwrap();
        for n in 1..6 {
            let g = gpm(&d, n).unwrap();
            assert_relative_eq!(g.matrix[(0, 1)], 0.25f64.powi(n as i32), max_relative = 1e-14);
            assert_eq!(g.matrix[(1, 0)], -1.0);
        }
        let g = gpm(&d, 600).unwrap();
        assert_eq!(g.matrix[(0, 1)], 0.0);
    }

    #[test]
    fn zero_contrast_multipoles_vanish() {
        let eps = 1e-9;
        let d = ConcentricDisks::new(vec![1.0], vec![1.0 + eps]).unwrap();
        for n in 1..5 {
            assert!(multipole(&d, n).unwrap().abs() < 2.0 * eps);
        }
    }

    #[test]
    fn e_system_matches_gpm() {
        let d = three_layer();
        for n in 1..=8 {
            let phi = density_coefficients(&d, n, Complex64::new(0.7, -0.2)).unwrap();
            let a = Complex64::new(0.7, -0.2);
            let s: Complex64 = phi.iter().zip(&d.radii).map(|(p, r)| p * r.powi(n as i32 + 1)).sum();
            let c = -s / (2.0 * n as f64 * a);
            let expected = multipole(&d, n).unwrap();
            assert!((c.re - expected).abs() <= 1e-12 * expected.abs().max(1e-300), "n={n}");
            assert!(c.im.abs() <= 1e-12 * expected.abs());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let radii = [1.0, 0.6, 0.3];
        let lambdas = [1.5, 7.0 / 6.0, -11.0 / 18.0];
        for n in [1, 3, 7] {
            let g = multipole_with_gradient(&radii, &lambdas, n).unwrap();
            let h = 1e-6;
            for k in 0..3 {
                let mut lp = lambdas;
                let mut lm = lambdas;
                lp[k] += h;
                lm[k] -= h;
                let fd = (Gpm::from_parts(&radii, &lp, n).multipole().unwrap()
                    - Gpm::from_parts(&radii, &lm, n).multipole().unwrap())
                    / (2.0 * h);
                assert!((fd - g.d_lambda[k]).abs() < 1e-7 * fd.abs().max(1e-3));
                let mut rp = radii;
                let mut rm = radii;
                rp[k] *= (h).exp();
                rm[k] *= (-h).exp();
                let fd = (Gpm::from_parts(&rp, &lambdas, n).multipole().unwrap()
                    - Gpm::from_parts(&rm, &lambdas, n).multipole().unwrap())
                    / (2.0 * h);
                assert!((fd - g.d_log_radius[k]).abs() < 1e-7 * fd.abs().max(1e-3), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn field_constant_background_and_inside_point() {
        let d = three_layer();
        assert_eq!(field_eval(&d, &HarmonicBackground::constant(2.0), &Point::new(3.0, 0.0)).unwrap(), 0.0);
        assert!(matches!(
            field_eval(&d, &HarmonicBackground::linear_x(), &Point::new(0.5, 0.0)),
            Err(Error::PointInsideInclusion(..))
        ));
    }

    #[test]
    fn shifted_field_uses_recentered_background() {
        let d = three_layer();
        let shift = Point::new(0.3, -0.2);
        let h = HarmonicBackground::linear_x().with_term(2, 0.2, 0.5);
        let x = Point::new(2.5, 1.5);
        let moved = field_eval(&d.translated(shift), &h, &x).unwrap();
        let local = h.recentered(&shift);
        let reference = field_eval(&d, &local, &(x - shift)).unwrap();
        assert_relative_eq!(moved, reference, max_relative = 1e-13);
    }

    #[test]
    fn decay_ratio_tends_to_outer_radius_squared() {
        let d = ConcentricDisks::new(vec![1.3, 0.9, 0.5], vec![2.0, 0.4, 3.0]).unwrap();
        let c40 = multipole(&d, 40).unwrap();
        let c41 = multipole(&d, 41).unwrap();
        assert!((c41 / c40 - 1.69).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn multipoles_bounded_by_outer_radius(
            r1 in 0.5f64..2.0, q2 in 0.3f64..0.8, q3 in 0.3f64..0.8,
            s in proptest::collection::vec(0.1f64..10.0, 3),
            n in 1usize..30,
        ) {
            prop_assume!((s[0] - 1.0).abs() > 1e-3 && (s[1] - s[0]).abs() > 1e-3 && (s[2] - s[1]).abs() > 1e-3);
            let d = ConcentricDisks::new(vec![r1, r1 * q2, r1 * q2 * q3], s).unwrap();
            let c = multipole(&d, n).unwrap();
            // |c_n| <= r_1^{2n} ||M^{-1}||, and ||M^{-1}|| stays moderate for |lambda| > 1/2
            prop_assert!(c.is_finite());
            prop_assert!(c.abs() <= r1.powi(2 * n as i32) * 1e4);
        }
    }
}
