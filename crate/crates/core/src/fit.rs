//! A small Levenberg–Marquardt solver for the nonlinear fits in the inverse
//! pipeline. Problems here have at most a few dozen unknowns, so each step
//! solves the damped system by SVD of the augmented Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when `||step|| <= step_tolerance * (||x|| + step_tolerance)`.
    pub step_tolerance: f64,
    /// Stop when the relative cost decrease falls below this.
    pub cost_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 200, step_tolerance: 1e-15, cost_tolerance: 1e-30, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub params: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `||r||^2 / 2`
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `||r(x)||^2 / 2`. The model returns `None` for infeasible
/// points, which are treated as rejected steps.
pub fn levenberg_marquardt<F>(mut model: F, x0: DVector<f64>, options: &LmOptions) -> Option<LmReport>
where
    F: FnMut(&DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)>,
{
    // non-finite output would stall the SVD; treat it as infeasible
    let mut model = move |x: &DVector<f64>| {
        model(x).filter(|(r, j): &(DVector<f64>, DMatrix<f64>)| r.iter().chain(j.iter()).all(|v| v.is_finite()))
    };
    let (mut r, mut j) = model(&x0)?;
    let mut x = x0;
    let mut cost = 0.5 * r.norm_squared();
    let mut mu = options.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let p = x.len();
        let m = r.len();
        // column scaling keeps the damping meaningful for mixed units
        let scale = DVector::from_iterator(p, j.column_iter().map(|c| c.norm().max(1e-300)));
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = DMatrix::zeros(m + p, p);
            a.view_mut((0, 0), (m, p)).copy_from(&j);
            for k in 0..p {
                a[(m + k, k)] = mu.sqrt() * scale[k];
            }
            let mut b = DVector::zeros(m + p);
            b.rows_mut(0, m).copy_from(&(-&r));
            let step = match a.svd(true, true).solve(&b, 1e-300) {
                Ok(s) => s,
                Err(_) => return None,
            };
            let trial = &x + &step;
            if let Some((rt, jt)) = model(&trial) {
                let trial_cost = 0.5 * rt.norm_squared();
                if trial_cost <= cost {
                    let decrease = cost - trial_cost;
                    let small_step = step.norm() <= options.step_tolerance * (x.norm() + options.step_tolerance);
                    x = trial;
                    r = rt;
                    j = jt;
                    let previous = cost;
                    cost = trial_cost;
                    mu = (mu / 3.0).max(1e-20);
                    accepted = true;
                    if small_step || decrease <= options.cost_tolerance * previous.max(1e-300) || cost == 0.0 {
                        converged = true;
                    }
                    break;
                }
            }
            mu *= 4.0;
            if mu > 1e20 {
                break;
            }
        }
        if !accepted {
            // no downhill step at any damping: a (numerical) stationary point
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Some(LmReport { params: x, residuals: r, cost, iterations, converged })
}

/// Central-difference Jacobian of `f` at `x` with per-parameter steps.
pub fn numeric_jacobian<F>(f: &mut F, x: &DVector<f64>, steps: &[f64]) -> Option<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Option<DVector<f64>>,
{
    let mut columns = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += steps[k];
        xm[k] -= steps[k];
        let d = (f(&xp)? - f(&xm)?) / (2.0 * steps[k]);
        columns.push(d);
    }
    Some(DMatrix::from_columns(&columns))
}
