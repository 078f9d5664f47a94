//! Bivariate polynomials in monomial form, used for GPT right-hand sides and
//! harmonic test functions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::Point;

/// Multi-index `(a, b)` for the monomial `x^a y^b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub u32, pub u32);

impl MultiIndex {
    pub fn degree(&self) -> u32 {
        self.0 + self.1
    }

    pub fn monomial(&self, p: &Point) -> f64 {
        p[0].powi(self.0 as i32) * p[1].powi(self.1 as i32)
    }

    pub fn gradient(&self, p: &Point) -> Point {
        let (a, b) = (self.0 as i32, self.1 as i32);
        let dx = if a == 0 { 0.0 } else { a as f64 * p[0].powi(a - 1) * p[1].powi(b) };
        let dy = if b == 0 { 0.0 } else { b as f64 * p[0].powi(a) * p[1].powi(b - 1) };
        Point::new(dx, dy)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0, self.1)
    }
}

impl std::str::FromStr for MultiIndex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("bad multi-index {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("bad multi-index {s:?}: {e}"));
        Ok(MultiIndex(parse(a)?, parse(b)?))
    }
}

/// All multi-indices with `1 <= |alpha| <= max_degree`, by degree, then by
/// decreasing power of `x`.
pub fn multi_indices(max_degree: u32) -> Vec<MultiIndex> {
    (1..=max_degree).flat_map(|d| (0..=d).map(move |j| MultiIndex(d - j, j))).collect()
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// A polynomial `sum_alpha c_alpha x^alpha`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn new(terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Self {
        let mut p = Polynomial::default();
        for (a, c) in terms {
            *p.terms.entry(a).or_default() += c;
        }
        p.terms.retain(|_, c| *c != 0.0);
        p
    }

    /// `Re((x + i y)^n) = r^n cos(n theta)`.
    pub fn cos_harmonic(n: u32) -> Self {
        Self::power_part(n, |k| [1.0, 0.0, -1.0, 0.0][(k % 4) as usize])
    }

    /// `Im((x + i y)^n) = r^n sin(n theta)`.
    pub fn sin_harmonic(n: u32) -> Self {
        Self::power_part(n, |k| [0.0, 1.0, 0.0, -1.0][(k % 4) as usize])
    }

    fn power_part(n: u32, unit: impl Fn(u32) -> f64) -> Self {
        Polynomial::new((0..=n).map(|k| (MultiIndex(n - k, k), binomial(n, k) * unit(k))))
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|a| a.degree()).max().unwrap_or(0)
    }

    pub fn eval(&self, p: &Point) -> f64 {
        self.terms.iter().map(|(a, c)| c * a.monomial(p)).sum()
    }

    pub fn gradient(&self, p: &Point) -> Point {
        self.terms.iter().map(|(a, c)| *c * a.gradient(p)).fold(Point::zeros(), |s, g| s + g)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Polynomial::new(self.terms.iter().map(|(a, c)| (*a, c * factor)))
    }

    pub fn add(&self, other: &Polynomial) -> Self {
        Polynomial::new(self.terms.iter().chain(other.terms.iter()).map(|(a, c)| (*a, *c)))
    }

    /// Exact Laplacian, coefficient by coefficient.
    pub fn laplacian(&self) -> Polynomial {
        let mut out = Vec::new();
        for (&MultiIndex(a, b), &c) in &self.terms {
            if a >= 2 {
                out.push((MultiIndex(a - 2, b), c * (a * (a - 1)) as f64));
            }
            if b >= 2 {
                out.push((MultiIndex(a, b - 2), c * (b * (b - 1)) as f64));
            }
        }
        Polynomial::new(out)
    }

    /// Largest Laplacian coefficient relative to the largest coefficient.
    pub fn harmonic_residual(&self) -> f64 {
        let scale = self.terms.values().map(|c| c.abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let lap = self.laplacian();
        lap.terms.values().map(|c| c.abs()).fold(0.0, f64::max) / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_polynomials_match_polar_form() {
        let p = Point::new(0.8, -0.35);
        let (r, t) = (p.norm(), p[1].atan2(p[0]));
        for n in 1..=6 {
            let c = Polynomial::cos_harmonic(n);
            let s = Polynomial::sin_harmonic(n);
            assert!((c.eval(&p) - r.powi(n as i32) * (n as f64 * t).cos()).abs() < 1e-13);
            assert!((s.eval(&p) - r.powi(n as i32) * (n as f64 * t).sin()).abs() < 1e-13);
            assert_eq!(c.harmonic_residual(), 0.0);
            assert_eq!(s.harmonic_residual(), 0.0);
        }
    }

    #[test]
    fn non_harmonic_is_detected() {
        let p = Polynomial::new([(MultiIndex(2, 0), 1.0), (MultiIndex(0, 2), 0.5)]);
        assert!(p.harmonic_residual() > 0.1);
    }

    #[test]
    fn index_enumeration() {
        let idx = multi_indices(2);
        assert_eq!(idx, vec![MultiIndex(1, 0), MultiIndex(0, 1), MultiIndex(2, 0), MultiIndex(1, 1), MultiIndex(0, 2)]);
        assert_eq!(multi_indices(4).len(), 14);
        assert_eq!("3:1".parse::<MultiIndex>().unwrap(), MultiIndex(3, 1));
    }

    #[test]
    fn gradient_of_monomial() {
        let a = MultiIndex(2, 3);
        let p = Point::new(1.3, -0.7);
        let g = a.gradient(&p);
        assert!((g[0] - 2.0 * 1.3 * (-0.7f64).powi(3)).abs() < 1e-14);
        assert!((g[1] - 3.0 * 1.3f64.powi(2) * 0.49).abs() < 1e-14);
    }
}
