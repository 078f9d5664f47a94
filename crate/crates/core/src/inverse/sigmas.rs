use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::disks::{cert_matrices, multipole_with_gradient, CertMatrices, MultipoleSpectrum};
use crate::error::{Error, Result};
use crate::model::Contrasts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SigmaOptions {
    /// Hadamard-normalized determinant below which a certificate fails.
    pub certificate_threshold: f64,
    /// Order combinations tried before giving up.
    pub max_combinations: usize,
    pub max_iterations: usize,
    /// Starting contrasts, typically from the radii stage.
    pub initial_lambdas: Option<Vec<f64>>,
}

impl Default for SigmaOptions {
    fn default() -> Self {
        SigmaOptions { certificate_threshold: 1e-10, max_combinations: 20, max_iterations: 100, initial_lambdas: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub orders: Vec<usize>,
    pub converged: bool,
    pub certificate_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub lambdas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub orders: Vec<usize>,
    pub certificate: CertMatrices,
    /// Largest scaled residual `|c_n(lambda) / c_hat_n - 1|` at the orders used.
    pub residual: f64,
    pub iterations: usize,
    pub attempts: Vec<Attempt>,
}

/// Strictly increasing `k`-subsets of `pool` in lexicographic order.
pub fn combinations(pool: &[usize], k: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
    let mut idx: Vec<usize> = (0..k).collect();
    let mut done = k > pool.len();
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = idx.iter().map(|&i| pool[i]).collect();
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                done = true;
                break;
            }
            i -= 1;
            if idx[i] < pool.len() - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    })
}

fn equations(radii: &[f64], lambdas: &[f64], orders: &[usize], target: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = orders.len();
    let mut f = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, n);
    for (i, &order) in orders.iter().enumerate() {
        let g = multipole_with_gradient(radii, lambdas, order).ok()?;
        let s = target[i].abs().max(f64::MIN_POSITIVE);
        f[i] = (g.value - target[i]) / s;
        for k in 0..n {
            j[(i, k)] = g.d_lambda[k] / s;
        }
    }
    Some((f, j))
}

/// Damped Newton on the scaled equations `c_n(lambda) / c_hat_n = 1`.
fn newton(
    radii: &[f64],
    start: &[f64],
    orders: &[usize],
    target: &[f64],
    max_iterations: usize,
) -> Option<(Vec<f64>, f64, usize)> {
    let feasible = |l: &[f64]| l.iter().all(|v| v.abs() > 0.5 && v.is_finite());
    let mut lambdas = start.to_vec();
    let (mut f, mut j) = equations(radii, &lambdas, orders, target)?;
    for it in 1..=max_iterations {
        let norm = f.amax();
        if norm <= 1e-14 {
            return Some((lambdas, norm, it - 1));
        }
        let step = j.clone().lu().solve(&(-&f))?;
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let trial: Vec<f64> = lambdas.iter().zip(step.iter()).map(|(l, s)| l + t * s).collect();
            if feasible(&trial) {
                if let Some((ft, jt)) = equations(radii, &trial, orders, target) {
                    if ft.norm() < (1.0 - 1e-4 * t) * f.norm() {
                        let small = step.amax() * t <= 1e-15 * trial.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                        lambdas = trial;
                        f = ft;
                        j = jt;
                        accepted = true;
                        if small {
                            let r = f.amax();
                            return (r <= 1e-9).then_some((lambdas, r, it));
                        }
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !accepted {
            // stalled: accept only if already at rounding level
            let r = f.amax();
            return (r <= 1e-11).then_some((lambdas, r, it));
        }
    }
    let r = f.amax();
    (r <= 1e-11).then_some((lambdas, r, max_iterations))
}

fn starting_points(layers: usize, initial: Option<&Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    if let Some(l) = initial {
        if l.len() == layers {
            out.push(l.clone());
        }
    }
    for mask in 0..(1usize << layers) {
        out.push((0..layers).map(|k| if mask >> k & 1 == 1 { -1.0 } else { 1.0 }).collect());
    }
    out
}

/// Conductivities from known radii by solving `c_n(lambda) = c_hat_n` at
/// `layers` orders. Order combinations are walked lexicographically over
/// the spectrum, `preferred` first, until the certificate matrices pass.
pub fn recover_sigmas(
    spectrum: &MultipoleSpectrum,
    radii: &[f64],
    preferred: &[usize],
    options: &SigmaOptions,
) -> Result<SigmaEstimate> {
    let layers = radii.len();
    if layers == 0 || radii.windows(2).any(|w| !(w[1] < w[0])) || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidStructure(format!("radii {radii:?} must be positive and strictly decreasing")));
    }
    if preferred.len() != layers || preferred.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::IndexOutOfRange(format!("need {layers} strictly increasing orders, got {preferred:?}")));
    }
    let pool: Vec<usize> = spectrum.orders().filter(|&n| spectrum.get(n).is_some_and(|c| c != 0.0)).collect();
    let mut combos: Vec<Vec<usize>> = Vec::new();
    if preferred.iter().all(|n| pool.contains(n)) {
        combos.push(preferred.to_vec());
    }
    combos.extend(combinations(&pool, layers).filter(|c| c != preferred));
    combos.truncate(options.max_combinations);
    if combos.is_empty() {
        return Err(Error::InvalidMeasurement(format!("spectrum has {} nonzero orders, need {layers}", pool.len())));
    }

    let starts = starting_points(layers, options.initial_lambdas.as_ref());
    let mut attempts = Vec::new();
    let mut any_converged = false;
    for orders in combos {
        let target: Vec<f64> = orders.iter().map(|&n| spectrum.get(n).unwrap_or(0.0)).collect();
        let solved = starts
            .iter()
            .filter_map(|s| newton(radii, s, &orders, &target, options.max_iterations))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((lambdas, residual, iterations)) = solved else {
            attempts.push(Attempt { orders, converged: false, certificate_passed: false });
            continue;
        };
        any_converged = true;
        let certificate = cert_matrices(&lambdas, radii, &orders)?;
        let passed = certificate.passes(options.certificate_threshold);
        attempts.push(Attempt { orders: orders.clone(), converged: true, certificate_passed: passed });
        if passed {
            let sigmas = Contrasts { lambdas: lambdas.clone() }.to_sigmas()?;
            return Ok(SigmaEstimate { lambdas, sigmas, orders, certificate, residual, iterations, attempts });
        }
    }
    if any_converged {
        Err(Error::CertificateFailed(attempts.len()))
    } else {
        Err(Error::NewtonDiverged(format!("no order combination converged after {} attempts", attempts.len())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disks::multipole_spectrum;
    use crate::model::{contrasts_of, ConcentricDisks};

    #[test]
    fn lexicographic_combinations() {
        let c: Vec<Vec<usize>> = combinations(&[1, 2, 3, 4], 2).collect();
        assert_eq!(c, vec![vec![1, 2], vec![1, 3], vec![1, 4], vec![2, 3], vec![2, 4], vec![3, 4]]);
        assert_eq!(combinations(&[1, 2, 3, 4, 5], 3).count(), 10);
        assert_eq!(combinations(&[1, 2], 3).count(), 0);
    }

    #[test]
    fn two_layers_round_trip() {
        let d = ConcentricDisks::new(vec![1.0, 0.5], vec![2.0, 3.0]).unwrap();
        let s = multipole_spectrum(&d, &[1, 2, 3, 4]).unwrap();
        let est = recover_sigmas(&s, &d.radii, &[1, 2], &SigmaOptions::default()).unwrap();
        assert_eq!(est.orders, vec![1, 2]);
        for (a, b) in est.sigmas.iter().zip(&d.sigmas) {
            assert!((a / b - 1.0).abs() < 1e-8);
        }
        assert!(est.certificate.passes(1e-10));
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let d = ConcentricDisks::new(vec![1.0, 0.6, 0.3], vec![2.0, 5.0, 0.5]).unwrap();
        let s = multipole_spectrum(&d, &[1, 2, 3]).unwrap();
        let truth = contrasts_of(&d).unwrap().lambdas;
        let options = SigmaOptions { initial_lambdas: Some(truth.clone()), ..SigmaOptions::default() };
        let est = recover_sigmas(&s, &d.radii, &[1, 2, 3], &options).unwrap();
        assert!(est.residual <= 1e-12);
        assert_eq!(est.iterations, 0);
    }

    #[test]
    fn vanishing_right_certificate_moves_to_next_combination() {
        let radii = [1.0, 0.6, 0.3];
        let (a, b, c): (f64, f64, f64) = (1.0, 0.36, 0.09);
        let l2 = 2.0;
        let l3 = l2 * c * c * (a - c) / (b * (b * b - a * c));
        let lambdas = vec![1.5, l2, l3];
        let sigmas = Contrasts { lambdas: lambdas.clone() }.to_sigmas().unwrap();
        let d = ConcentricDisks::new(radii.to_vec(), sigmas.clone()).unwrap();
        let s = multipole_spectrum(&d, &[1, 2, 3, 4, 5]).unwrap();
        let options = SigmaOptions { initial_lambdas: Some(lambdas), ..SigmaOptions::default() };
        let est = recover_sigmas(&s, &radii, &[1, 2, 3], &options).unwrap();
        assert_eq!(est.attempts[0].orders, vec![1, 2, 3]);
        assert!(!est.attempts[0].certificate_passed);
        assert_eq!(est.orders, vec![1, 2, 4]);
        for (x, y) in est.sigmas.iter().zip(&sigmas) {
            assert!((x / y - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn empty_spectrum_is_rejected() {
        let s = MultipoleSpectrum::new(Default::default());
        assert!(recover_sigmas(&s, &[1.0], &[1], &SigmaOptions::default()).is_err());
    }
}
