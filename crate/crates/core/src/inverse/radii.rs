use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disks::{multipole_with_gradient, MultipoleSpectrum};
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::model::Contrasts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiiEstimate {
    pub radii: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Stage-one estimates before refinement.
    pub peeled_radii: Vec<f64>,
    pub peeled_lambdas: Vec<f64>,
    /// Set when peeling produced radii out of order and refinement had to
    /// start from a repaired guess.
    pub repaired: bool,
    /// Weighted root-mean-square misfit over the fitted orders.
    pub weighted_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-order data used by both stages: value and absolute scale.
struct Data {
    orders: Vec<usize>,
    values: Vec<f64>,
    sigma: Vec<f64>,
}

impl Data {
    fn new(
        spectrum: &MultipoleSpectrum,
        orders: &[usize],
        uncertainties: Option<&BTreeMap<usize, f64>>,
    ) -> Result<Self> {
        let mut d = Data { orders: Vec::new(), values: Vec::new(), sigma: Vec::new() };
        let scale = orders.iter().filter_map(|&n| spectrum.get(n)).fold(0.0f64, |m, c| m.max(c.abs()));
        for &n in orders {
            let c = spectrum.get(n).ok_or_else(|| Error::InvalidMeasurement(format!("spectrum has no order {n}")))?;
            let u = uncertainties.and_then(|u| u.get(&n)).copied().unwrap_or(0.0);
            // exact data: relative weighting with a tiny absolute floor
            let s = u.max(1e-14 * c.abs()).max(1e-300 * scale).max(f64::MIN_POSITIVE);
            d.orders.push(n);
            d.values.push(c);
            d.sigma.push(s);
        }
        Ok(d)
    }

    fn reliable(&self, k: usize, value: f64) -> bool {
        value.abs() > 3.0 * self.sigma[k]
    }
}

/// Large-n peeling: `c_n ~ sum_k w_k r_k^{2n}` with the lower-triangular
/// limit of the polarization matrix. With noisy data the inner layers may
/// leave no reliable ratio; the layers found so far are returned.
fn peel(data: &Data, layers: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut residual = data.values.clone();
    let mut radii = Vec::with_capacity(layers);
    let mut weights: Vec<f64> = Vec::with_capacity(layers);
    let mut lambdas = Vec::with_capacity(layers);
    for k in 0..layers {
        // consecutive reliable pairs and their squared-radius ratios
        let mut ratios: Vec<(usize, f64)> = Vec::new();
        for i in 0..data.orders.len().saturating_sub(1) {
            if data.orders[i + 1] != data.orders[i] + 1 {
                continue;
            }
            if !(data.reliable(i, residual[i]) && data.reliable(i + 1, residual[i + 1])) {
                continue;
            }
            let rho = residual[i + 1] / residual[i];
            // each peeled layer must sit strictly inside the previous one
            let below = radii.last().map_or(true, |r: &f64| rho < r * r);
            if rho > 0.0 && rho.is_finite() && below {
                ratios.push((i, rho));
            }
        }
        if ratios.is_empty() {
            if k == 0 {
                return Err(Error::PeelExhausted { found: 0, requested: layers });
            }
            break;
        }
        // plateau: the consecutive ratio pair that changes least
        let mut pick = ratios[ratios.len() - 1];
        let mut best = f64::INFINITY;
        for w in ratios.windows(2) {
            if data.orders[w[1].0] != data.orders[w[0].0] + 1 {
                continue;
            }
            let change = ((w[1].1 - w[0].1) / w[0].1).abs();
            if change < best {
                best = change;
                pick = w[1];
            }
        }
        let (i, rho) = pick;
        let n = data.orders[i] as i32;
        let w = residual[i] / rho.powi(n);
        let lambda = -(1.0 + weights.iter().sum::<f64>()) / (2.0 * w);
        if !lambda.is_finite() {
            if k == 0 {
                return Err(Error::PeelExhausted { found: 0, requested: layers });
            }
            break;
        }
        for (j, &m) in data.orders.iter().enumerate() {
            residual[j] -= w * rho.powi(m as i32);
        }
        radii.push(rho.sqrt());
        weights.push(w);
        lambdas.push(lambda);
    }
    Ok((radii, lambdas))
}

/// Forces a strictly decreasing sequence and `|lambda| > 1/2`.
fn repair(radii: &mut [f64], lambdas: &mut [f64]) -> bool {
    let mut changed = false;
    for k in 1..radii.len() {
        if !(radii[k] < radii[k - 1]) {
            radii[k] = 0.8 * radii[k - 1];
            changed = true;
        }
    }
    for l in lambdas.iter_mut() {
        if !(l.abs() > 0.5) || !l.is_finite() {
            *l = if *l < 0.0 { -1.0 } else { 1.0 };
            changed = true;
        }
    }
    changed
}

/// Unconstrained coordinates `(ln r_1, s_2..s_N, ln sigma_1..ln sigma_N)`
/// with `r_k = r_{k-1} exp(-exp(s_k))`: every point is a valid structure.
fn encode(radii: &[f64], sigmas: &[f64]) -> DVector<f64> {
    let mut x = Vec::with_capacity(2 * radii.len());
    x.push(radii[0].ln());
    for w in radii.windows(2) {
        x.push((w[0] / w[1]).ln().ln());
    }
    x.extend(sigmas.iter().map(|s| s.ln()));
    DVector::from_vec(x)
}

struct Decoded {
    radii: Vec<f64>,
    lambdas: Vec<f64>,
    /// `d ln r_k / d x_j` over the radius block.
    d_log_r: DMatrix<f64>,
    /// `d lambda_k / d ln sigma_j`.
    d_lambda: DMatrix<f64>,
}

fn decode(x: &DVector<f64>) -> Option<Decoded> {
    let layers = x.len() / 2;
    let mut log_r = vec![x[0]];
    let mut d_log_r = DMatrix::zeros(layers, layers);
    d_log_r[(0, 0)] = 1.0;
    for k in 1..layers {
        log_r.push(log_r[k - 1] - x[k].exp());
        for j in 0..layers {
            d_log_r[(k, j)] = d_log_r[(k - 1, j)];
        }
        d_log_r[(k, k)] = -x[k].exp();
    }
    let sig: Vec<f64> = x.rows(layers, layers).iter().map(|v| v.exp()).collect();
    let mut lambdas = Vec::with_capacity(layers);
    let mut d_lambda = DMatrix::zeros(layers, layers);
    for k in 0..layers {
        let a = sig[k];
        let b = if k == 0 { 1.0 } else { sig[k - 1] };
        let diff = a - b;
        if !(diff.abs() > 1e-12 * a.max(b)) {
            return None;
        }
        lambdas.push((a + b) / (2.0 * diff));
        d_lambda[(k, k)] = -a * b / (diff * diff);
        if k > 0 {
            d_lambda[(k, k - 1)] = a * b / (diff * diff);
        }
    }
    let radii: Vec<f64> = log_r.iter().map(|v| v.exp()).collect();
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) || radii.windows(2).any(|w| !(w[1] < w[0])) {
        return None;
    }
    Some(Decoded { radii, lambdas, d_log_r, d_lambda })
}

fn refine_once(data: &Data, sigma: &[f64], x0: DVector<f64>) -> Option<crate::fit::LmReport> {
    let layers = x0.len() / 2;
    let model = |x: &DVector<f64>| {
        let d = decode(x)?;
        let mut res = DVector::zeros(data.orders.len());
        let mut jac = DMatrix::zeros(data.orders.len(), 2 * layers);
        for (i, &n) in data.orders.iter().enumerate() {
            let g = multipole_with_gradient(&d.radii, &d.lambdas, n).ok()?;
            let s = sigma[i];
            res[i] = (g.value - data.values[i]) / s;
            let gr = DVector::from_column_slice(&g.d_log_radius);
            let gl = DVector::from_column_slice(&g.d_lambda);
            let jr = d.d_log_r.tr_mul(&gr);
            let jl = d.d_lambda.tr_mul(&gl);
            for k in 0..layers {
                jac[(i, k)] = jr[k] / s;
                jac[(i, layers + k)] = jl[k] / s;
            }
        }
        Some((res, jac))
    };
    levenberg_marquardt(model, x0, &LmOptions { max_iterations: 200, ..LmOptions::default() })
}

/// Weighted least squares over the structure. The weights span many
/// decades, which leaves a narrow curved valley; a continuation on a
/// relative error floor walks down it from loose to the true weights.
/// A loose floor makes almost everything fit and can let a good start
/// drift away, so several schedules are run (including none) and the
/// lowest final cost wins.
fn refine(data: &Data, radii: &[f64], sigmas: &[f64]) -> Option<crate::fit::LmReport> {
    [None, Some(1e-2), Some(1e-5)]
        .into_iter()
        .filter_map(|first| {
            let mut x = encode(radii, sigmas);
            let mut floor = first;
            loop {
                let f = floor.unwrap_or(0.0);
                let sigma: Vec<f64> = data.sigma.iter().zip(&data.values).map(|(s, c)| s.max(f * c.abs())).collect();
                let report = refine_once(data, &sigma, x)?;
                match floor {
                    Some(f) if f >= 1e-16 => {
                        x = report.params;
                        floor = Some(f * 1e-2);
                    }
                    _ => return Some(report),
                }
            }
        })
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
}

/// Radii and contrasts from a multipole spectrum, treating the given
/// values as exact (relative weighting).
pub fn recover_radii(spectrum: &MultipoleSpectrum, layers: usize, orders: &[usize]) -> Result<RadiiEstimate> {
    recover_radii_weighted(spectrum, layers, orders, None)
}

/// As [`recover_radii`], weighting each order by its standard error.
pub fn recover_radii_weighted(
    spectrum: &MultipoleSpectrum,
    layers: usize,
    orders: &[usize],
    uncertainties: Option<&BTreeMap<usize, f64>>,
) -> Result<RadiiEstimate> {
    if layers == 0 {
        return Err(Error::InvalidStructure("at least one layer is required".into()));
    }
    let mut orders = orders.to_vec();
    orders.sort_unstable();
    orders.dedup();
    let data = Data::new(spectrum, &orders, uncertainties)?;
    if data.orders.len() < 2 * layers {
        return Err(Error::InvalidMeasurement(format!(
            "{} orders cannot determine {layers} radii and conductivities",
            data.orders.len()
        )));
    }
    let (peeled_radii, peeled_lambdas) = peel(&data, layers)?;
    let found = peeled_radii.len();
    // layers the spectrum could not resolve start from a few geometric guesses
    let mut radius_starts = Vec::new();
    for fraction in [0.5, 0.75] {
        let mut radii = peeled_radii.clone();
        let mut lambdas = peeled_lambdas.clone();
        while radii.len() < layers {
            radii.push(fraction * radii[radii.len() - 1]);
            lambdas.push(1.0);
        }
        let repaired = repair(&mut radii, &mut lambdas) || found < layers;
        radius_starts.push((radii, lambdas, repaired));
        if found == layers {
            break;
        }
    }

    // the peeled contrasts of inner layers are often poor; also start from
    // every sign pattern of unit contrasts
    let mut starts: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, (_, lambdas, _)) in radius_starts.iter().enumerate() {
        if let Ok(s) = (Contrasts { lambdas: lambdas.clone() }).to_sigmas() {
            starts.push((i, s));
        }
        for mask in 0..(1usize << layers) {
            let l: Vec<f64> = (0..layers).map(|k| if mask >> k & 1 == 1 { -1.0 } else { 1.0 }).collect();
            starts.push((i, Contrasts { lambdas: l }.to_sigmas()?));
        }
    }
    let (start, report) = starts
        .par_iter()
        .filter_map(|(i, s)| refine(&data, &radius_starts[*i].0, s).map(|r| (*i, r)))
        .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
        .ok_or_else(|| {
            Error::NonPhysicalEstimate(format!("peeled radii {peeled_radii:?} admit no feasible refinement"))
        })?;
    let repaired = radius_starts[start].2;
    let fitted =
        decode(&report.params).ok_or_else(|| Error::NonPhysicalEstimate("refined structure is degenerate".into()))?;
    let (radii, lambdas) = (fitted.radii, fitted.lambdas);
    let sigmas: Vec<f64> = report.params.rows(layers, layers).iter().map(|v| v.exp()).collect();
    let weighted_rms = (report.residuals.norm_squared() / report.residuals.len() as f64).sqrt();
    Ok(RadiiEstimate {
        radii,
        lambdas,
        sigmas,
        peeled_radii,
        peeled_lambdas,
        repaired,
        weighted_rms,
        iterations: report.iterations,
        converged: report.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disks::multipole_spectrum;
    use crate::model::ConcentricDisks;

    #[test]
    fn single_disk_is_exact() {
        let d = ConcentricDisks::new(vec![1.0], vec![3.0]).unwrap();
        let orders: Vec<usize> = (1..=6).collect();
        let s = multipole_spectrum(&d, &orders).unwrap();
        let est = recover_radii(&s, 1, &orders).unwrap();
        assert_eq!(est.peeled_radii, vec![1.0]);
        assert_eq!(est.peeled_lambdas, vec![1.0]);
        assert!((est.sigmas[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn three_layers_from_twenty_orders() {
        let d = ConcentricDisks::new(vec![1.0, 0.6, 0.3], vec![2.0, 5.0, 0.5]).unwrap();
        let orders: Vec<usize> = (1..=20).collect();
        let s = multipole_spectrum(&d, &orders).unwrap();
        let est = recover_radii(&s, 3, &orders).unwrap();
        for (got, want) in est.radii.iter().zip(&d.radii) {
            assert!((got / want - 1.0).abs() < 1e-6, "{:?}", est.radii);
        }
        for (got, want) in est.sigmas.iter().zip(&d.sigmas) {
            assert!((got / want - 1.0).abs() < 1e-6, "{:?}", est.sigmas);
        }
    }

    #[test]
    fn zero_spectrum_is_exhausted() {
        let mut s = MultipoleSpectrum::new(Default::default());
        for n in 1..=10 {
            s.values.insert(n, 0.0);
        }
        let orders: Vec<usize> = (1..=10).collect();
        assert!(matches!(recover_radii(&s, 2, &orders), Err(Error::PeelExhausted { found: 0, .. })));
    }
}
