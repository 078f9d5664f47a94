use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{Error, Result};

/// A harmonic background potential with finitely many nonzero orders,
///
/// `H(x) = H(0) + sum_n r^n (a_n^c cos(n theta) + a_n^s sin(n theta))`.
///
/// Internally each order is the complex coefficient `A_n = a_n^c - i a_n^s`,
/// so that `H = H(0) + Re sum_n A_n zeta^n` with `zeta = x + i y`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "BackgroundSpec", try_from = "BackgroundSpec")]
pub struct HarmonicBackground {
    constant: f64,
    terms: BTreeMap<usize, Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderClass {
    FullOrder,
    PartialOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundTerm {
    pub n: usize,
    #[serde(default)]
    pub ac: f64,
    #[serde(default, rename = "as")]
    pub as_: f64,
}

/// Serialized form: `{constant, terms: [{n, ac, as}]}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BackgroundSpec {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<BackgroundTerm>,
}

impl TryFrom<BackgroundSpec> for HarmonicBackground {
    type Error = Error;

    fn try_from(spec: BackgroundSpec) -> Result<Self> {
        let mut h = HarmonicBackground::constant(spec.constant);
        for t in spec.terms {
            if t.n == 0 {
                return Err(Error::Config("background term order must be at least 1".into()));
            }
            if !(t.ac.is_finite() && t.as_.is_finite()) {
                return Err(Error::Config(format!("background term {} is not finite", t.n)));
            }
            let c = h.terms.entry(t.n).or_default();
            *c += Complex64::new(t.ac, -t.as_);
        }
        h.prune();
        Ok(h)
    }
}

impl From<HarmonicBackground> for BackgroundSpec {
    fn from(h: HarmonicBackground) -> Self {
        BackgroundSpec {
            constant: h.constant,
            terms: h.terms.iter().map(|(&n, c)| BackgroundTerm { n, ac: c.re, as_: -c.im }).collect(),
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl HarmonicBackground {
    pub fn constant(value: f64) -> Self {
        HarmonicBackground { constant: value, terms: BTreeMap::new() }
    }

    /// `H(x) = x_1`.
    pub fn linear_x() -> Self {
        Self::constant(0.0).with_term(1, 1.0, 0.0)
    }

    /// `H(x) = x_2`.
    pub fn linear_y() -> Self {
        Self::constant(0.0).with_term(1, 0.0, 1.0)
    }

    /// Adds `r^n (ac cos(n theta) + as_ sin(n theta))`.
    pub fn with_term(mut self, n: usize, ac: f64, as_: f64) -> Self {
        assert!(n >= 1, "harmonic order must be at least 1");
        *self.terms.entry(n).or_default() += Complex64::new(ac, -as_);
        self.prune();
        self
    }

    /// Adds `Re(a zeta^n)` for a complex coefficient `a`.
    pub fn with_complex_term(mut self, n: usize, a: Complex64) -> Self {
        assert!(n >= 1, "harmonic order must be at least 1");
        *self.terms.entry(n).or_default() += a;
        self.prune();
        self
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.re != 0.0 || c.im != 0.0);
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    /// Complex coefficient `A_n = a_n^c - i a_n^s` (zero when absent).
    pub fn complex_coefficient(&self, n: usize) -> Complex64 {
        self.terms.get(&n).copied().unwrap_or_default()
    }

    /// `(a_n^c, a_n^s)`.
    pub fn coefficient(&self, n: usize) -> (f64, f64) {
        let c = self.complex_coefficient(n);
        (c.re, -c.im)
    }

    pub fn orders(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.terms.iter().map(|(&n, &c)| (n, c))
    }

    pub fn max_order(&self) -> usize {
        self.terms.keys().next_back().copied().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let z = Complex64::new(x[0], x[1]);
        self.constant + self.complex_sum(z, |n, a, z| a * z.powu(n as u32)).re
    }

    pub fn gradient(&self, x: &Point) -> Point {
        let z = Complex64::new(x[0], x[1]);
        let d = self.complex_sum(z, |n, a, z| a * n as f64 * z.powu(n as u32 - 1));
        Point::new(d.re, -d.im)
    }

    fn complex_sum(&self, z: Complex64, term: impl Fn(usize, Complex64, Complex64) -> Complex64) -> Complex64 {
        self.terms.iter().map(|(&n, &a)| term(n, a, z)).sum()
    }

    /// Re-expands the background about `center`: the returned background
    /// `G` satisfies `G(w) = H(center + w)`.
    pub fn recentered(&self, center: &Point) -> Self {
        let z = Complex64::new(center[0], center[1]);
        let mut out = HarmonicBackground::constant(self.eval(center));
        for (&n, &a) in &self.terms {
            for m in 1..=n {
                let c = a * binomial(n, m) * z.powu((n - m) as u32);
                *out.terms.entry(m).or_default() += c;
            }
        }
        out.prune();
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.constant *= factor;
        for c in out.terms.values_mut() {
            *c *= factor;
        }
        out.prune();
        out
    }
}

/// Full order iff both `a_n^c` and `a_n^s` are nonzero for every probed order.
pub fn classify_order(h: &HarmonicBackground, probe_orders: &BTreeSet<usize>) -> OrderClass {
    let full = probe_orders.iter().all(|&n| {
        let (ac, as_) = h.coefficient(n);
        ac != 0.0 && as_ != 0.0
    });
    if full {
        OrderClass::FullOrder
    } else {
        OrderClass::PartialOrder
    }
}
