//! Shared fixtures for the criterion benchmarks.

use std::f64::consts::PI;

use strata_core::disks::field_eval;
use strata_core::inverse::MeasurementSet;
use strata_core::{ConcentricDisks, HarmonicBackground, Point};

/// The three-layer disk structure used throughout the examples.
pub fn three_layer() -> ConcentricDisks {
    ConcentricDisks::new(vec![1.0, 0.6, 0.3], vec![2.0, 5.0, 0.5]).expect("valid fixture")
}

/// A partial-order background with a few low orders.
pub fn background() -> HarmonicBackground {
    HarmonicBackground::linear_x().with_term(2, 0.4, 0.0).with_term(3, 0.0, 0.2)
}

/// Every order up to `orders`, with quadratic phases and a profile that
/// peaks at order 6 on the circle of radius `radius`.
pub fn full_background(orders: usize, radius: f64) -> HarmonicBackground {
    (1..=orders).fold(HarmonicBackground::constant(0.0), |h, n| {
        let phase = 0.7 * (n * n) as f64;
        let profile = if n <= 6 { 1.5f64.powi(n as i32) } else { 1.5f64.powi(6) * 0.3f64.powi(n as i32 - 6) };
        let a = profile * radius.powi(-(n as i32));
        h.with_term(n, a * phase.cos(), a * phase.sin())
    })
}

/// Noiseless samples of `u` on a circle around the origin.
pub fn circle_measurement(d: &ConcentricDisks, h: &HarmonicBackground, radius: f64, count: usize) -> MeasurementSet {
    let points: Vec<Point> = (0..count)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / count as f64;
            Point::new(radius * t.cos(), radius * t.sin())
        })
        .collect();
    let values = points.iter().map(|p| h.eval(p) + field_eval(d, h, p).expect("exterior point")).collect();
    MeasurementSet::new(points, values, h.clone(), Point::zeros(), radius / 1.05).expect("valid measurement")
}
