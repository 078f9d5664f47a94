use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

const PIVOT_TOLERANCE: f64 = 1e-13;

/// LU factorization with partial pivoting that refuses numerically singular
/// matrices: a pivot below `1e-13 * max|a_ij|` is reported as
/// [`Error::SingularSystem`].
pub struct LuFactor {
    lu: LU<f64, Dyn, Dyn>,
}

impl LuFactor {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let scale = a.amax();
        let lu = a.lu();
        let pivot = lu.u().diagonal().amin();
        if !(pivot > PIVOT_TOLERANCE * scale) {
            return Err(Error::SingularSystem { pivot, scale });
        }
        Ok(LuFactor { lu })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(b).expect("pivots checked at factorization")
    }

    pub fn solve_many(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(b).expect("pivots checked at factorization")
    }

    pub fn determinant(&self) -> f64 {
        self.lu.determinant()
    }
}

/// Determinant by partial-pivoting LU, without the singularity check.
pub fn determinant(a: &DMatrix<f64>) -> f64 {
    a.clone().lu().determinant()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(LuFactor::new(a), Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn solves_and_determines() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let f = LuFactor::new(a.clone()).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = f.solve(&b);
        assert!((&a * x - b).norm() < 1e-14);
        assert!((f.determinant() - 18.0).abs() < 1e-12);
        assert!((determinant(&a) - 18.0).abs() < 1e-12);
    }
}
