//! Recursions for the adjugate of the polarization matrix and the
//! certificate matrices built from it.
//!
//! Indices in this module are 1-based to match the layer numbering.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ratio_power;
use crate::error::{Error, Result};
use crate::linalg::determinant;

fn check_indices(m: usize, i: usize, j: usize, layers: usize) -> Result<()> {
    if m == 0 || m > layers || i == 0 || i >= j || j > m + 1 {
        return Err(Error::IndexOutOfRange(format!(
            "need 1 <= i < j <= M + 1 and M <= {layers}, got M = {m}, i = {i}, j = {j}"
        )));
    }
    Ok(())
}

/// All `K_M^{i,j}` for `1 <= i < j <= M + 1`, indexed `[i][j]`.
fn k_table(m: usize, n: usize, lambdas: &[f64], radii: &[f64]) -> Vec<Vec<f64>> {
    let t = |i: usize, j: usize| ratio_power(radii[j - 1], radii[i - 1], n);
    let mut k = vec![vec![0.0; m + 2]; m + 2];
    for row in k.iter_mut().take(m + 1).skip(1) {
        row[m + 1] = 1.0;
    }
    for j in (2..=m).rev() {
        for i in 1..j {
            k[i][j] = (t(i, j) + 1.0) * k[j][j + 1] - (-2.0 * lambdas[j - 1] + 1.0) * k[i][j + 1];
        }
    }
    k
}

/// All `L_M^{i,j}`, indexed `[i][j]`.
fn l_table(m: usize, n: usize, lambdas: &[f64], radii: &[f64]) -> Vec<Vec<f64>> {
    let p = 2 * n as i32;
    let mut l = vec![vec![0.0; m + 2]; m + 2];
    for (i, row) in l.iter_mut().enumerate().take(m + 1).skip(1) {
        row[m + 1] = radii[i - 1].powi(p);
    }
    for j in (2..=m).rev() {
        for i in 1..j {
            // t_{j,i} = (r_i / r_j)^{2n} >= 1
            let t_ji = (radii[i - 1] / radii[j - 1]).powi(p);
            l[i][j] = (t_ji + 1.0) * l[j][j + 1] + (-2.0 * lambdas[j - 1] - 1.0) * l[i][j + 1];
        }
    }
    l
}

/// `K_M^{i,j}(n)` by backward recursion from `K_M^{i,M+1} = 1`.
pub fn k_term(m: usize, i: usize, j: usize, n: usize, lambdas: &[f64], radii: &[f64]) -> Result<f64> {
    check_indices(m, i, j, lambdas.len().min(radii.len()))?;
    Ok(k_table(m, n, lambdas, radii)[i][j])
}

/// `L_M^{i,j}(n)` by backward recursion from `L_M^{i,M+1} = r_i^{2n}`.
pub fn l_term(m: usize, i: usize, j: usize, n: usize, lambdas: &[f64], radii: &[f64]) -> Result<f64> {
    check_indices(m, i, j, lambdas.len().min(radii.len()))?;
    Ok(l_table(m, n, lambdas, radii)[i][j])
}

/// `(M^{(n)})^* e` from the general-term formula
/// `(-1)^{N-i} prod_{j<i} (-2 lambda_j + 1) K_N^{i,i+1}`.
pub fn adjugate_col(lambdas: &[f64], radii: &[f64], n: usize) -> DVector<f64> {
    let size = lambdas.len();
    let k = k_table(size, n, lambdas, radii);
    let mut prefix = 1.0;
    DVector::from_fn(size, |row, _| {
        let i = row + 1;
        let sign = if (size - i) % 2 == 0 { 1.0 } else { -1.0 };
        let v = sign * prefix * k[i][i + 1];
        prefix *= -2.0 * lambdas[row] + 1.0;
        v
    })
}

/// `e^T Upsilon^{(n)} (M^{(n)})^*` from the general-term formula
/// `prod_{j<i} (-2 lambda_j - 1) L_N^{i,i+1}`.
pub fn adjugate_row(lambdas: &[f64], radii: &[f64], n: usize) -> DVector<f64> {
    let size = lambdas.len();
    let l = l_table(size, n, lambdas, radii);
    let mut prefix = 1.0;
    DVector::from_fn(size, |row, _| {
        let v = prefix * l[row + 1][row + 2];
        prefix *= -2.0 * lambdas[row] - 1.0;
        v
    })
}

/// Certificate matrices for a choice of `N` orders: the rows of `left` are
/// `e^T Upsilon^{(i_k)} (M^{(i_k)})^*` and the columns of `right` are
/// `(M^{(i_k)})^* e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertMatrices {
    pub orders: Vec<usize>,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub det_left: f64,
    pub det_right: f64,
    /// `|det| / prod ||row||` (Hadamard ratio, in `[0, 1]`).
    pub rel_left: f64,
    /// `|det| / prod ||column||`.
    pub rel_right: f64,
}

impl CertMatrices {
    pub fn passes(&self, threshold: f64) -> bool {
        self.rel_left > threshold && self.rel_right > threshold
    }
}

fn hadamard_ratio(det: f64, norms: impl Iterator<Item = f64>) -> f64 {
    let scale: f64 = norms.product();
    if scale > 0.0 {
        det.abs() / scale
    } else {
        0.0
    }
}

pub fn cert_matrices(lambdas: &[f64], radii: &[f64], orders: &[usize]) -> Result<CertMatrices> {
    let size = lambdas.len();
    if orders.len() != size || orders.windows(2).any(|w| w[0] >= w[1]) || orders.first() == Some(&0) {
        return Err(Error::IndexOutOfRange(format!("need {size} strictly increasing positive orders, got {orders:?}")));
    }
    let mut left = DMatrix::zeros(size, size);
    let mut right = DMatrix::zeros(size, size);
    for (k, &n) in orders.iter().enumerate() {
        left.set_row(k, &adjugate_row(lambdas, radii, n).transpose());
        right.set_column(k, &adjugate_col(lambdas, radii, n));
    }
    let det_left = determinant(&left);
    let det_right = determinant(&right);
    let rel_left = hadamard_ratio(det_left, left.row_iter().map(|r| r.norm()));
    let rel_right = hadamard_ratio(det_right, right.column_iter().map(|c| c.norm()));
    Ok(CertMatrices { orders: orders.to_vec(), left, right, det_left, det_right, rel_left, rel_right })
}

/// Printed closed form of `det R_3` for orders `(1, 2, 3)`.
pub fn det_r3_closed_form(lambdas: &[f64], radii: &[f64]) -> f64 {
    let (l1, l2, l3) = (lambdas[0], lambdas[1], lambdas[2]);
    let (a, b, c) = (radii[0] * radii[0], radii[1] * radii[1], radii[2] * radii[2]);
    -2.0 * c
        * (2.0 * l1 - 1.0).powi(2)
        * (2.0 * l2 - 1.0)
        * (a - b)
        * (b - c)
        * (-l3 * a * b * c - l2 * a * c * c + l3 * b * b * b + l2 * c * c * c)
        / (a * a * a * b * b * b)
}

/// Printed closed form of `det L_3` for orders `(1, 2, 3)`.
pub fn det_l3_closed_form(lambdas: &[f64], radii: &[f64]) -> f64 {
    let (l2, l3) = (lambdas[1], lambdas[2]);
    let l1 = lambdas[0];
    let (a, b, c) = (radii[0] * radii[0], radii[1] * radii[1], radii[2] * radii[2]);
    -2.0 * l3
        * a
        * c
        * (2.0 * l1 + 1.0).powi(2)
        * (2.0 * l2 + 1.0)
        * (a - b)
        * (b - c)
        * (4.0 * l2 * l3 * a * b + a * c * c * c / (b * b) - 4.0 * l2 * l3 * b * c - c * c)
}
