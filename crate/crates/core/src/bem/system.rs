use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::LuFactor;
use crate::model::{contrasts_of, Contrasts, CurveSamples, HarmonicBackground, LayeredShape, Point};

const COARSE_TOLERANCE: f64 = 1e-8;

/// Nyström discretization of the block system `(I^lambda - K*_A) phi = g`
/// on nested interfaces, using the periodic trapezoid rule on each curve.
///
/// Unknowns are ordered interface by interface (outer first); `kernel`
/// holds the block operator `K*_A` itself, with `K*_{Gamma_k}` on the
/// diagonal blocks and `nu_k . grad S_{Gamma_l}` off the diagonal.
#[derive(Debug, Clone)]
pub struct BlockNpSystem {
    pub contrasts: Contrasts,
    pub sigmas: Vec<f64>,
    pub interfaces: Vec<CurveSamples>,
    offsets: Vec<usize>,
    kernel: DMatrix<f64>,
}

/// Interface densities `phi_k` sampled at the quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: Vec<DVector<f64>>,
}

impl DensityField {
    pub fn zeros(system: &BlockNpSystem) -> Self {
        DensityField { values: system.interfaces.iter().map(|s| DVector::zeros(s.len())).collect() }
    }

    pub fn interface(&self, k: usize) -> &DVector<f64> {
        &self.values[k]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    }

    /// CSV with columns `interface,param,value` (interfaces numbered from 1).
    pub fn write_csv<W: std::io::Write>(&self, system: &BlockNpSystem, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["interface", "param", "value"]).map_err(io)?;
        for (k, phi) in self.values.iter().enumerate() {
            for (t, v) in system.interfaces[k].params.iter().zip(phi.iter()) {
                w.write_record([(k + 1).to_string(), format!("{t:.16e}"), format!("{v:.16e}")]).map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
        Ok(())
    }
}

fn quadrature_error(samples: &CurveSamples, refined: &CurveSamples) -> f64 {
    let perimeter: f64 = samples.weights.iter().sum();
    let reference: f64 = refined.weights.iter().sum();
    let turning: f64 = samples.curvatures.iter().zip(&samples.weights).map(|(k, w)| k * w).sum();
    ((perimeter - reference).abs() / reference).max((turning - 2.0 * PI).abs() / (2.0 * PI))
}

/// Assembles the block system for `shape` with `nodes_per_curve` trapezoid
/// nodes on every interface.
///
/// Diagonal entries of each `K*_{Gamma_k}` block use the curvature limit
/// `kappa / (4 pi)` of the kernel.
pub fn assemble(shape: &LayeredShape, nodes_per_curve: usize) -> Result<BlockNpSystem> {
    if nodes_per_curve < 16 || nodes_per_curve % 2 != 0 {
        return Err(Error::InvalidStructure(format!(
            "nodes per curve must be even and at least 16, got {nodes_per_curve}"
        )));
    }
    let violations = shape.validate();
    if !violations.is_empty() {
        crate::model::violations_to_error(violations)?;
    }
    let contrasts = contrasts_of(shape)?;

    let mut interfaces = Vec::with_capacity(shape.curves.len());
    for (k, curve) in shape.curves.iter().enumerate() {
        let samples = curve.sample(nodes_per_curve);
        let error = quadrature_error(&samples, &curve.sample(2 * nodes_per_curve));
        if error > COARSE_TOLERANCE {
            return Err(Error::CurveTooCoarse { curve: k, nodes: nodes_per_curve, error });
        }
        interfaces.push(samples);
    }

    let mut offsets = vec![0];
    for s in &interfaces {
        offsets.push(offsets.last().unwrap() + s.len());
    }
    let n = *offsets.last().unwrap();

    let points: Vec<Point> = interfaces.iter().flat_map(|s| s.points.iter().copied()).collect();
    let normals: Vec<Point> = interfaces.iter().flat_map(|s| s.normals.iter().copied()).collect();
    let curvatures: Vec<f64> = interfaces.iter().flat_map(|s| s.curvatures.iter().copied()).collect();
    let weights: Vec<f64> = interfaces.iter().flat_map(|s| s.weights.iter().copied()).collect();

    // column-major storage: column j is the source node y_j
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(j, column)| {
        let y = points[j];
        let w = weights[j];
        for (i, entry) in column.iter_mut().enumerate() {
            *entry = if i == j {
                curvatures[i] / (4.0 * PI) * w
            } else {
                let d = points[i] - y;
                d.dot(&normals[i]) / (2.0 * PI * d.norm_squared()) * w
            };
        }
    });

    Ok(BlockNpSystem {
        contrasts,
        sigmas: shape.sigmas.clone(),
        interfaces,
        offsets,
        kernel: DMatrix::from_vec(n, n, data),
    })
}

impl BlockNpSystem {
    pub fn size(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn interface_count(&self) -> usize {
        self.interfaces.len()
    }

    pub fn range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    /// The discretized block operator `K*_A`.
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// `I^lambda - K*_A`.
    pub fn operator(&self) -> DMatrix<f64> {
        let mut a = -self.kernel.clone();
        for k in 0..self.interface_count() {
            for i in self.range(k) {
                a[(i, i)] += self.contrasts[k];
            }
        }
        a
    }

    pub fn factor(&self) -> Result<LuFactor> {
        LuFactor::new(self.operator())
    }

    pub(crate) fn nodes(&self) -> impl Iterator<Item = (usize, &Point, &Point, f64)> + '_ {
        self.interfaces
            .iter()
            .enumerate()
            .flat_map(|(k, s)| s.points.iter().zip(&s.normals).zip(&s.weights).map(move |((p, n), w)| (k, p, n, *w)))
    }

    /// Right-hand side `nu_k . grad f` at every node for a field with gradient `grad`.
    pub(crate) fn normal_derivative(&self, grad: impl Fn(&Point) -> Point) -> DVector<f64> {
        DVector::from_iterator(self.size(), self.nodes().map(|(_, p, n, _)| grad(p).dot(n)))
    }

    /// Splits a stacked solution into per-interface densities with zero mean.
    pub(crate) fn split_and_project(&self, stacked: &DVector<f64>) -> DensityField {
        let values = (0..self.interface_count())
            .map(|k| {
                let r = self.range(k);
                let w = &self.interfaces[k].weights;
                let mut phi = DVector::from_iterator(r.len(), stacked.rows(r.start, r.len()).iter().copied());
                let mean = phi.iter().zip(w).map(|(p, w)| p * w).sum::<f64>() / w.iter().sum::<f64>();
                phi.add_scalar_mut(-mean);
                phi
            })
            .collect();
        DensityField { values }
    }

    /// `sum_j w_j phi_k(y_j)` on interface `k`.
    pub fn integral(&self, densities: &DensityField, k: usize) -> f64 {
        densities.values[k].iter().zip(&self.interfaces[k].weights).map(|(p, w)| p * w).sum()
    }

    pub fn is_exterior(&self, x: &Point) -> bool {
        let outer = &self.interfaces[0].points;
        crate::model::curve_winding(outer, x) == 0 && outer.iter().all(|p| (p - x).norm() > 0.0)
    }
}

/// Solves for the interface densities induced by the background `h`.
pub fn solve_densities(system: &BlockNpSystem, h: &HarmonicBackground) -> Result<DensityField> {
    let rhs = system.normal_derivative(|p| h.gradient(p));
    let phi = system.factor()?.solve(&rhs);
    Ok(system.split_and_project(&phi))
}

/// `(u - H)(x) = sum_k S_{Gamma_k}[phi_k](x)` by direct quadrature.
pub fn far_field_eval(system: &BlockNpSystem, densities: &DensityField, x: &Point) -> Result<f64> {
    if !system.is_exterior(x) {
        return Err(Error::PointInsideInclusion(x[0], x[1]));
    }
    let mut total = 0.0;
    for (k, s) in system.interfaces.iter().enumerate() {
        for ((y, w), phi) in s.points.iter().zip(&s.weights).zip(densities.values[k].iter()) {
            total += (x - y).norm().ln() * phi * w;
        }
    }
    Ok(total / (2.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SmoothCurve;

    fn unit_disk(sigma: f64) -> LayeredShape {
        LayeredShape::new(vec![SmoothCurve::circle(Point::zeros(), 1.0)], vec![sigma]).unwrap()
    }

    #[test]
    fn dimensions_and_coupling() {
        let shape = LayeredShape::new(
            vec![SmoothCurve::circle(Point::zeros(), 1.0), SmoothCurve::circle(Point::zeros(), 0.5)],
            vec![2.0, 3.0],
        )
        .unwrap();
        let sys = assemble(&shape, 64).unwrap();
        assert_eq!(sys.size(), 128);
        assert_eq!(sys.kernel().shape(), (128, 128));
        let off = sys.kernel().view((0, 64), (64, 64)).amax();
        assert!(off > 1e-3);
    }

    #[test]
    fn circle_kernel_annihilates_nonconstant_modes() {
        let sys = assemble(&unit_disk(3.0), 64).unwrap();
        let s = &sys.interfaces[0];
        for n in 1..5 {
            let v = DVector::from_iterator(64, s.params.iter().map(|t| (n as f64 * t).cos()));
            assert!((sys.kernel() * v).amax() <= 1e-10);
        }
        let ones = DVector::from_element(64, 1.0);
        assert!(((sys.kernel() * ones).add_scalar(-0.5)).amax() < 1e-12);
    }

    #[test]
    fn ellipse_adjoint_gauss_relation() {
        let shape = LayeredShape::new(vec![SmoothCurve::ellipse(Point::zeros(), 1.0, 0.5, 0.0)], vec![2.0]).unwrap();
        let check = |m: usize| {
            let sys = assemble(&shape, m).unwrap();
            let w = DVector::from_vec(sys.interfaces[0].weights.clone());
            // w^T K* = w / 2 is the discrete form of K[1] = 1/2
            let lhs = sys.kernel().tr_mul(&w);
            (lhs - &w * 0.5).component_div(&w).amax()
        };
        assert!(check(128) < 1e-10);
        assert!(check(1024) < 1e-10);
        let sys = assemble(&shape, 128).unwrap();
        let w = DVector::from_vec(sys.interfaces[0].weights.clone());
        let mean = w.dot(&(sys.kernel() * DVector::from_element(128, 1.0))) / w.sum();
        assert!((mean - 0.5).abs() < 1e-10);
    }

    #[test]
    fn too_few_nodes_is_reported() {
        let wiggly = SmoothCurve::perturbed_circle(Point::zeros(), 1.0, &[(7, 0.2, 0.0)]);
        let shape = LayeredShape::new(vec![wiggly], vec![2.0]).unwrap();
        assert!(matches!(assemble(&shape, 16), Err(Error::CurveTooCoarse { .. })));
        assert!(assemble(&shape, 256).is_ok());
        assert!(assemble(&shape, 17).is_err());
    }

    #[test]
    fn unit_disk_density_for_linear_background() {
        let sys = assemble(&unit_disk(3.0), 64).unwrap();
        let phi = solve_densities(&sys, &HarmonicBackground::linear_x()).unwrap();
        for (t, v) in sys.interfaces[0].params.iter().zip(phi.values[0].iter()) {
            assert!((v - t.cos()).abs() < 1e-12);
        }
        let u = far_field_eval(&sys, &phi, &Point::new(2.0, 0.0)).unwrap();
        assert!((u + 0.25).abs() < 1e-12);
        assert!(matches!(far_field_eval(&sys, &phi, &Point::new(0.2, 0.1)), Err(Error::PointInsideInclusion(..))));
    }

    #[test]
    fn zero_density_gives_zero_field() {
        let sys = assemble(&unit_disk(3.0), 32).unwrap();
        let phi = DensityField::zeros(&sys);
        assert_eq!(far_field_eval(&sys, &phi, &Point::new(10.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn vanishing_contrast_gives_vanishing_density() {
        let eps = 1e-8;
        let shape = LayeredShape::new(
            vec![SmoothCurve::ellipse(Point::zeros(), 1.0, 0.6, 0.2), SmoothCurve::circle(Point::new(0.1, 0.0), 0.3)],
            vec![1.0 + eps, 1.0 + 2.0 * eps],
        )
        .unwrap();
        let sys = assemble(&shape, 64).unwrap();
        let h = HarmonicBackground::linear_x().with_term(2, 0.3, 0.4);
        let phi = solve_densities(&sys, &h).unwrap();
        assert!(phi.norm() < 1e3 * eps, "{}", phi.norm());
    }

    #[test]
    fn densities_have_zero_mean() {
        let shape = LayeredShape::new(
            vec![
                SmoothCurve::perturbed_circle(Point::zeros(), 1.0, &[(3, 0.1, 0.2)]),
                SmoothCurve::ellipse(Point::new(0.05, 0.0), 0.5, 0.35, 0.4),
            ],
            vec![4.0, 0.3],
        )
        .unwrap();
        let sys = assemble(&shape, 128).unwrap();
        let h = HarmonicBackground::linear_x().with_term(3, 0.2, -0.5);
        let phi = solve_densities(&sys, &h).unwrap();
        for k in 0..2 {
            let norm = phi.values[k].norm();
            assert!(sys.integral(&phi, k).abs() <= 1e-10 * norm);
        }
    }
}
