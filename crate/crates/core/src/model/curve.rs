use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{sigma_violations, violations_to_error, Layered, Point, Violation};
use crate::error::Result;

const DEFAULT_NODES: usize = 128;

fn default_nodes() -> usize {
    DEFAULT_NODES
}

/// Serialized curve: trigonometric coefficients indexed by frequency
/// (`sin_*[0]` is ignored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub cos_x: Vec<f64>,
    #[serde(default)]
    pub sin_x: Vec<f64>,
    #[serde(default)]
    pub cos_y: Vec<f64>,
    pub sin_y: Vec<f64>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

/// A closed curve `t -> (x(t), y(t))`, `t` in `[0, 2 pi)`, given by
/// trigonometric polynomials
/// `x(t) = sum_k cos_x[k] cos(k t) + sin_x[k] sin(k t)` (same for `y`).
///
/// Curves are expected to be counter-clockwise so that `(y', -x') / |gamma'|`
/// is the outward normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "CurveSpec", into = "CurveSpec")]
pub struct SmoothCurve {
    cos_x: Vec<f64>,
    sin_x: Vec<f64>,
    cos_y: Vec<f64>,
    sin_y: Vec<f64>,
    nodes: usize,
}

impl From<CurveSpec> for SmoothCurve {
    fn from(s: CurveSpec) -> Self {
        SmoothCurve::from_coefficients(s.cos_x, s.sin_x, s.cos_y, s.sin_y).with_nodes(s.nodes)
    }
}

impl From<SmoothCurve> for CurveSpec {
    fn from(c: SmoothCurve) -> Self {
        CurveSpec { cos_x: c.cos_x, sin_x: c.sin_x, cos_y: c.cos_y, sin_y: c.sin_y, nodes: c.nodes }
    }
}

/// Quadrature data on one curve at `m` equispaced parameter values.
#[derive(Debug, Clone)]
pub struct CurveSamples {
    pub params: Vec<f64>,
    pub points: Vec<Point>,
    pub normals: Vec<Point>,
    pub speeds: Vec<f64>,
    pub curvatures: Vec<f64>,
    /// Trapezoid weights `(2 pi / m) |gamma'(t_j)|`.
    pub weights: Vec<f64>,
}

impl CurveSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl SmoothCurve {
    pub fn from_coefficients(cos_x: Vec<f64>, sin_x: Vec<f64>, cos_y: Vec<f64>, sin_y: Vec<f64>) -> Self {
        let len = cos_x.len().max(sin_x.len()).max(cos_y.len()).max(sin_y.len()).max(1);
        let pad = |mut v: Vec<f64>| {
            v.resize(len, 0.0);
            v
        };
        SmoothCurve { cos_x: pad(cos_x), sin_x: pad(sin_x), cos_y: pad(cos_y), sin_y: pad(sin_y), nodes: DEFAULT_NODES }
    }

    pub fn circle(center: Point, radius: f64) -> Self {
        Self::ellipse(center, radius, radius, 0.0)
    }

    /// Ellipse with semi-axes `a`, `b`, rotated by `angle`.
    pub fn ellipse(center: Point, a: f64, b: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        SmoothCurve::from_coefficients(
            vec![center[0], a * c],
            vec![0.0, -b * s],
            vec![center[1], a * s],
            vec![0.0, b * c],
        )
    }

    /// Star-shaped curve `r(t) = radius (1 + sum eps cos(k t + phase))` over
    /// `modes = [(k, eps, phase)]`, written out as a trigonometric polynomial.
    pub fn perturbed_circle(center: Point, radius: f64, modes: &[(usize, f64, f64)]) -> Self {
        let kmax = modes.iter().map(|m| m.0).max().unwrap_or(0) + 1;
        let mut cx = vec![0.0; kmax + 1];
        let mut sx = vec![0.0; kmax + 1];
        let mut cy = vec![0.0; kmax + 1];
        let mut sy = vec![0.0; kmax + 1];
        cx[0] = center[0];
        cy[0] = center[1];
        cx[1] += radius;
        sy[1] += radius;
        // eps cos(kt + p) cos t = eps/2 [cos((k+1)t + p) + cos((k-1)t + p)]
        // eps cos(kt + p) sin t = eps/2 [sin((k+1)t + p) - sin((k-1)t + p)]
        for &(k, eps, phase) in modes {
            let amp = radius * eps / 2.0;
            for (f, sign) in [(k as isize + 1, 1.0), (k as isize - 1, -1.0)] {
                let n = f.unsigned_abs();
                // cos(f t + p) and sin(f t + p) rewritten with |f|
                let (s, c) = phase.sin_cos();
                let fs = if f < 0 { -1.0 } else { 1.0 };
                cx[n] += amp * c;
                sx[n] -= amp * s * fs;
                cy[n] += sign * amp * s;
                sy[n] += sign * amp * c * fs;
            }
        }
        SmoothCurve::from_coefficients(cx, sx, cy, sy)
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn translated(&self, shift: Point) -> Self {
        let mut out = self.clone();
        out.cos_x[0] += shift[0];
        out.cos_y[0] += shift[1];
        out
    }

    /// Derivative of order `d` (0, 1 or 2) at parameter `t`.
    fn eval_derivative(&self, t: f64, d: u32) -> Point {
        let mut p = Point::zeros();
        for k in 0..self.cos_x.len() {
            let kf = k as f64;
            let (s, c) = (kf * t).sin_cos();
            let scale = kf.powi(d as i32);
            // d-th derivative of (cos, sin)
            let (dc, ds) = match d % 4 {
                0 => (c, s),
                1 => (-s, c),
                2 => (-c, -s),
                _ => (s, -c),
            };
            let (dc, ds) = if k == 0 && d > 0 { (0.0, 0.0) } else { (dc * scale, ds * scale) };
            p[0] += self.cos_x[k] * dc + if k == 0 { 0.0 } else { self.sin_x[k] * ds };
            p[1] += self.cos_y[k] * dc + if k == 0 { 0.0 } else { self.sin_y[k] * ds };
        }
        p
    }

    pub fn point(&self, t: f64) -> Point {
        self.eval_derivative(t, 0)
    }

    pub fn tangent(&self, t: f64) -> Point {
        self.eval_derivative(t, 1)
    }

    pub fn sample(&self, m: usize) -> CurveSamples {
        let h = 2.0 * PI / m as f64;
        let mut out = CurveSamples {
            params: Vec::with_capacity(m),
            points: Vec::with_capacity(m),
            normals: Vec::with_capacity(m),
            speeds: Vec::with_capacity(m),
            curvatures: Vec::with_capacity(m),
            weights: Vec::with_capacity(m),
        };
        for j in 0..m {
            let t = j as f64 * h;
            let d1 = self.eval_derivative(t, 1);
            let d2 = self.eval_derivative(t, 2);
            let speed = d1.norm();
            out.params.push(t);
            out.points.push(self.point(t));
            out.normals.push(Point::new(d1[1], -d1[0]) / speed);
            out.curvatures.push((d1[0] * d2[1] - d1[1] * d2[0]) / speed.powi(3));
            out.speeds.push(speed);
            out.weights.push(h * speed);
        }
        out
    }

    pub fn signed_area(&self) -> f64 {
        // Green: A = 1/2 \oint (x y' - y x') dt, exact for the trigonometric form
        let n = self.cos_x.len();
        (1..n).map(|k| PI * k as f64 * (self.cos_x[k] * self.sin_y[k] - self.sin_x[k] * self.cos_y[k])).sum()
    }

    /// Winding number of the sampled polygon around `p`.
    pub fn winding_number(&self, p: &Point) -> i64 {
        winding(&self.sample(self.nodes.max(64)).points, p)
    }

    fn validate_into(&self, index: usize, out: &mut Vec<Violation>) {
        let m = self.nodes.max(64);
        let samples = self.sample(m);
        let scale = samples.speeds.iter().cloned().fold(0.0, f64::max);
        if samples.speeds.iter().any(|&s| !(s > 1e-12 * scale.max(1e-300))) {
            out.push(Violation::ZeroSpeed { curve: index });
            return;
        }
        if polygon_self_intersects(&samples.points) {
            out.push(Violation::SelfIntersecting { curve: index });
        }
        if self.signed_area() <= 0.0 {
            out.push(Violation::Clockwise { curve: index });
        }
    }
}

pub(crate) fn winding(polygon: &[Point], p: &Point) -> i64 {
    let mut total = 0.0;
    let m = polygon.len();
    for j in 0..m {
        let a = polygon[j] - p;
        let b = polygon[(j + 1) % m] - p;
        total += (a[0] * b[1] - a[1] * b[0]).atan2(a.dot(&b));
    }
    (total / (2.0 * PI)).round() as i64
}

fn segments_cross(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> bool {
    let cross = |o: &Point, a: &Point, b: &Point| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0)
}

fn polygon_self_intersects(pts: &[Point]) -> bool {
    let m = pts.len();
    for i in 0..m {
        let (a1, a2) = (&pts[i], &pts[(i + 1) % m]);
        for j in i + 2..m {
            if i == 0 && j == m - 1 {
                continue;
            }
            if segments_cross(a1, a2, &pts[j], &pts[(j + 1) % m]) {
                return true;
            }
        }
    }
    false
}

fn polygons_cross(a: &[Point], b: &[Point]) -> bool {
    let (ma, mb) = (a.len(), b.len());
    (0..ma).any(|i| (0..mb).any(|j| segments_cross(&a[i], &a[(i + 1) % ma], &b[j], &b[(j + 1) % mb])))
}

/// Nested smooth interfaces `Gamma_1 ⊃ ... ⊃ Gamma_N` with the conductivity of
/// the layer just inside each one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredShape {
    pub curves: Vec<SmoothCurve>,
    pub sigmas: Vec<f64>,
}

impl LayeredShape {
    pub fn new(curves: Vec<SmoothCurve>, sigmas: Vec<f64>) -> Result<Self> {
        let shape = LayeredShape { curves, sigmas };
        violations_to_error(shape.validate())?;
        Ok(shape)
    }

    pub fn new_unchecked(curves: Vec<SmoothCurve>, sigmas: Vec<f64>) -> Self {
        LayeredShape { curves, sigmas }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.curves.is_empty() {
            out.push(Violation::Empty);
            return out;
        }
        if self.curves.len() != self.sigmas.len() {
            out.push(Violation::LengthMismatch { radii: self.curves.len(), sigmas: self.sigmas.len() });
        }
        for (k, c) in self.curves.iter().enumerate() {
            c.validate_into(k, &mut out);
        }
        for k in 1..self.curves.len() {
            let outer = &self.curves[k - 1];
            let inner = &self.curves[k];
            let m = outer.nodes.max(inner.nodes).max(64);
            let po = outer.sample(m).points;
            let pi = inner.sample(m).points;
            if polygons_cross(&po, &pi) {
                out.push(Violation::CurvesTouch { outer: k - 1, inner: k });
                continue;
            }
            let scale = po.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1.0);
            let min_dist = po.iter().flat_map(|a| pi.iter().map(move |b| (a - b).norm())).fold(f64::INFINITY, f64::min);
            if min_dist <= 1e-10 * scale {
                out.push(Violation::CurvesTouch { outer: k - 1, inner: k });
            } else if pi.iter().any(|p| winding(&po, p) == 0) {
                out.push(Violation::NotNested { outer: k - 1, inner: k });
            }
        }
        out.extend(sigma_violations(&self.sigmas));
        out
    }

    /// True when `p` lies strictly outside the outermost interface.
    pub fn is_exterior(&self, p: &Point) -> bool {
        self.curves[0].winding_number(p) == 0
    }

    pub fn translated(&self, shift: Point) -> Self {
        LayeredShape { curves: self.curves.iter().map(|c| c.translated(shift)).collect(), sigmas: self.sigmas.clone() }
    }

    /// Largest distance from the origin to a sampled point of the outer curve.
    pub fn extent(&self) -> f64 {
        let c = &self.curves[0];
        c.sample(c.nodes.max(64)).points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

impl Layered for LayeredShape {
    fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_geometry() {
        let c = SmoothCurve::circle(Point::new(0.5, -1.0), 2.0);
        let s = c.sample(32);
        for j in 0..32 {
            assert!((s.speeds[j] - 2.0).abs() < 1e-14);
            assert!((s.curvatures[j] - 0.5).abs() < 1e-14);
            let radial = (s.points[j] - Point::new(0.5, -1.0)) / 2.0;
            assert!((s.normals[j] - radial).norm() < 1e-14);
        }
        assert!((c.signed_area() - 4.0 * PI).abs() < 1e-12);
        let total: f64 = s.weights.iter().sum();
        assert!((total - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn ellipse_perimeter_and_area() {
        let c = SmoothCurve::ellipse(Point::zeros(), 1.0, 0.5, 0.3);
        assert!((c.signed_area() - PI * 0.5).abs() < 1e-12);
        // Ramanujan-free check: trapezoid converges spectrally
        let p64: f64 = c.sample(64).weights.iter().sum();
        let p256: f64 = c.sample(256).weights.iter().sum();
        assert!((p64 - p256).abs() < 1e-12);
    }

    #[test]
    fn perturbed_circle_matches_polar_form() {
        let modes = [(3, 0.1, 0.4), (5, -0.05, 1.0)];
        let c = SmoothCurve::perturbed_circle(Point::new(0.1, 0.2), 1.5, &modes);
        for t in [0.0, 0.7, 2.0, 4.5] {
            let r = 1.5 * (1.0 + modes.iter().map(|&(k, e, p)| e * (k as f64 * t + p).cos()).sum::<f64>());
            let expected = Point::new(0.1 + r * t.cos(), 0.2 + r * t.sin());
            assert!((c.point(t) - expected).norm() < 1e-13, "t = {t}");
        }
    }

    #[test]
    fn nesting_checks() {
        let outer = SmoothCurve::ellipse(Point::zeros(), 1.0, 0.7, 0.0);
        let inner = SmoothCurve::circle(Point::new(0.1, 0.0), 0.4);
        assert!(LayeredShape::new(vec![outer.clone(), inner.clone()], vec![2.0, 3.0]).is_ok());

        let shape = LayeredShape::new_unchecked(vec![inner.clone(), outer.clone()], vec![2.0, 3.0]);
        assert!(!shape.validate().is_empty());

        let far = SmoothCurve::circle(Point::new(3.0, 0.0), 0.4);
        let shape = LayeredShape::new_unchecked(vec![outer.clone(), far], vec![2.0, 3.0]);
        assert_eq!(shape.validate(), vec![Violation::NotNested { outer: 0, inner: 1 }]);

        let crossing = SmoothCurve::circle(Point::new(0.8, 0.0), 0.4);
        let shape = LayeredShape::new_unchecked(vec![outer.clone(), crossing], vec![2.0, 3.0]);
        assert_eq!(shape.validate(), vec![Violation::CurvesTouch { outer: 0, inner: 1 }]);

        let cw = SmoothCurve::from_coefficients(vec![0.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, -1.0]);
        let shape = LayeredShape::new_unchecked(vec![cw], vec![2.0]);
        assert_eq!(shape.validate(), vec![Violation::Clockwise { curve: 0 }]);
    }

    #[test]
    fn figure_eight_is_rejected() {
        // x = sin t, y = sin 2t / 2 crosses itself at the origin
        let c = SmoothCurve::from_coefficients(vec![0.0], vec![0.0, 1.0], vec![0.0], vec![0.0, 0.0, 0.5]);
        let shape = LayeredShape::new_unchecked(vec![c], vec![2.0]);
        assert!(shape.validate().contains(&Violation::SelfIntersecting { curve: 0 }));
    }

    #[test]
    fn exterior_test() {
        let shape = LayeredShape::new(vec![SmoothCurve::circle(Point::zeros(), 1.0)], vec![2.0]).unwrap();
        assert!(shape.is_exterior(&Point::new(1.5, 0.0)));
        assert!(!shape.is_exterior(&Point::new(0.5, 0.2)));
    }

    #[test]
    fn serde_shape() {
        let c = SmoothCurve::circle(Point::zeros(), 1.0).with_nodes(64);
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["cos_x"], serde_json::json!([0.0, 1.0]));
        assert_eq!(json["sin_y"], serde_json::json!([0.0, 1.0]));
        let back: SmoothCurve = serde_json::from_value(json).unwrap();
        assert_eq!(back, c);
    }
}
