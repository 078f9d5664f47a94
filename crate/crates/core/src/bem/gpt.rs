use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::system::BlockNpSystem;
use crate::error::{Error, Result};
use crate::model::{HarmonicBackground, Point};
use crate::poly::{multi_indices, MultiIndex, Polynomial};

/// Generalized polarization tensors `M_{alpha beta}` for all multi-indices
/// with `1 <= |alpha|, |beta| <= max_degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct GptTable {
    pub max_degree: u32,
    entries: BTreeMap<(MultiIndex, MultiIndex), f64>,
}

impl GptTable {
    pub fn get(&self, alpha: MultiIndex, beta: MultiIndex) -> f64 {
        self.entries
            .get(&(alpha, beta))
            .copied()
            .unwrap_or_else(|| panic!("GPT entry ({alpha}, {beta}) outside degree {}", self.max_degree))
    }

    pub fn entries(&self) -> impl Iterator<Item = (MultiIndex, MultiIndex, f64)> + '_ {
        self.entries.iter().map(|(&(a, b), &v)| (a, b, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The first-order tensor `(M_ij)`.
    pub fn first_order(&self) -> nalgebra::Matrix2<f64> {
        let e = [MultiIndex(1, 0), MultiIndex(0, 1)];
        nalgebra::Matrix2::from_fn(|i, j| self.get(e[i], e[j]))
    }

    /// `sum_{alpha, beta} a_alpha b_beta M_{alpha beta}`.
    pub fn contract(&self, a: &Polynomial, b: &Polynomial) -> f64 {
        let mut total = 0.0;
        for (&alpha, &ca) in &a.terms {
            for (&beta, &cb) in &b.terms {
                total += ca * cb * self.get(alpha, beta);
            }
        }
        total
    }

    /// Like [`contract`](Self::contract) but summing absolute values, as a
    /// scale for relative comparisons.
    pub fn contract_abs(&self, a: &Polynomial, b: &Polynomial) -> f64 {
        let mut total = 0.0;
        for (&alpha, &ca) in &a.terms {
            for (&beta, &cb) in &b.terms {
                total += (ca * cb * self.get(alpha, beta)).abs();
            }
        }
        total
    }

    /// CSV with columns `alpha,beta,value`; multi-indices are written as `a:b`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
        w.write_record(["alpha", "beta", "value"]).map_err(io)?;
        for (a, b, v) in self.entries() {
            w.write_record([a.to_string(), b.to_string(), format!("{v:.16e}")]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
        Ok(())
    }
}

/// Solves the block system for each right-hand side `nu . grad p` and returns
/// the densities, stacked column by column.
fn polynomial_densities(system: &BlockNpSystem, sources: &[Polynomial]) -> Result<DMatrix<f64>> {
    let n = system.size();
    let mut rhs = DMatrix::zeros(n, sources.len());
    for (c, p) in sources.iter().enumerate() {
        rhs.set_column(c, &system.normal_derivative(|x| p.gradient(x)));
    }
    let mut phi = system.factor()?.solve_many(&rhs);
    for c in 0..sources.len() {
        let col = DVector::from_column_slice(phi.column(c).as_slice());
        let projected = system.split_and_project(&col);
        let mut offset = 0;
        for v in &projected.values {
            phi.view_mut((offset, c), (v.len(), 1)).copy_from(v);
            offset += v.len();
        }
    }
    Ok(phi)
}

/// Weighted test functions `w_j p(y_j)` for each polynomial, as rows.
fn moment_rows(system: &BlockNpSystem, tests: &[Polynomial]) -> DMatrix<f64> {
    let n = system.size();
    let mut rows = DMatrix::zeros(tests.len(), n);
    for (r, p) in tests.iter().enumerate() {
        for (j, (_, y, _, w)) in system.nodes().enumerate() {
            rows[(r, j)] = p.eval(y) * w;
        }
    }
    rows
}

pub fn gpt(system: &BlockNpSystem, max_degree: u32) -> Result<GptTable> {
    if max_degree == 0 {
        return Err(Error::Config("GPT degree must be at least 1".into()));
    }
    let indices = multi_indices(max_degree);
    let monomials: Vec<Polynomial> = indices.iter().map(|&a| Polynomial::new([(a, 1.0)])).collect();
    let phi = polynomial_densities(system, &monomials)?;
    let m = moment_rows(system, &monomials) * phi;
    let mut entries = BTreeMap::new();
    for (i, &a) in indices.iter().enumerate() {
        for (j, &b) in indices.iter().enumerate() {
            entries.insert((a, b), m[(i, j)]);
        }
    }
    Ok(GptTable { max_degree, entries })
}

/// Contracted GPTs `M^{cc}, M^{cs}, M^{sc}, M^{ss}` of orders `1..=order`;
/// entry `(m-1, n-1)` pairs the harmonic `r^m (cos|sin)(m theta)` as test
/// function with `r^n (cos|sin)(n theta)` as source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgptBlock {
    pub order: usize,
    pub cc: DMatrix<f64>,
    pub cs: DMatrix<f64>,
    pub sc: DMatrix<f64>,
    pub ss: DMatrix<f64>,
}

impl CgptBlock {
    pub fn from_table(table: &GptTable, order: usize) -> Self {
        assert!(order >= 1 && order as u32 <= table.max_degree, "CGPT order exceeds GPT degree");
        let cos: Vec<Polynomial> = (1..=order as u32).map(Polynomial::cos_harmonic).collect();
        let sin: Vec<Polynomial> = (1..=order as u32).map(Polynomial::sin_harmonic).collect();
        let block =
            |a: &[Polynomial], b: &[Polynomial]| DMatrix::from_fn(order, order, |m, n| table.contract(&a[m], &b[n]));
        CgptBlock { order, cc: block(&cos, &cos), cs: block(&cos, &sin), sc: block(&sin, &cos), ss: block(&sin, &sin) }
    }

    /// Truncated far-field series for `u - H` about the origin, using the
    /// orders of `h` up to this block's order.
    pub fn far_field_series(&self, h: &HarmonicBackground, x: &Point) -> f64 {
        let (r, theta) = (x.norm(), x[1].atan2(x[0]));
        let mut total = 0.0;
        for m in 1..=self.order {
            let (mut pc, mut ps) = (0.0, 0.0);
            for n in 1..=self.order {
                let (ac, as_) = h.coefficient(n);
                pc += self.cc[(m - 1, n - 1)] * ac + self.cs[(m - 1, n - 1)] * as_;
                ps += self.sc[(m - 1, n - 1)] * ac + self.ss[(m - 1, n - 1)] * as_;
            }
            let scale = 2.0 * PI * m as f64 * r.powi(m as i32);
            let mt = m as f64 * theta;
            total -= (mt.cos() * pc + mt.sin() * ps) / scale;
        }
        total
    }

    /// For radially symmetric structures, the multipole coefficient
    /// `c_n = -M^{cc}_{nn} / (2 pi n)`, averaged with the `ss` block.
    pub fn radial_multipole(&self, n: usize) -> f64 {
        -(self.cc[(n - 1, n - 1)] + self.ss[(n - 1, n - 1)]) / (4.0 * PI * n as f64)
    }
}

pub fn cgpt(system: &BlockNpSystem, order: usize) -> Result<CgptBlock> {
    if order == 0 {
        return Err(Error::Config("CGPT order must be at least 1".into()));
    }
    Ok(CgptBlock::from_table(&gpt(system, order as u32)?, order))
}
