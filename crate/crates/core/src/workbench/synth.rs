use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{ExperimentConfig, ForwardMethod, Structure};
use crate::bem::{assemble, far_field_eval, solve_densities, BlockNpSystem, DensityField};
use crate::disks::field_eval;
use crate::error::{Error, Result};
use crate::inverse::MeasurementSet;
use crate::model::{ConcentricDisks, HarmonicBackground, Point};

/// A solved forward problem that evaluates `u - H` outside the inclusion.
pub enum Forward {
    Analytic(ConcentricDisks, HarmonicBackground),
    Bem(Box<(BlockNpSystem, DensityField)>),
}

impl Forward {
    pub fn new(structure: &Structure, h: &HarmonicBackground, method: ForwardMethod, nodes: usize) -> Result<Self> {
        Ok(match (structure, method) {
            (Structure::Disks(d), ForwardMethod::Auto | ForwardMethod::Analytic) => {
                Forward::Analytic(d.clone(), h.clone())
            }
            (Structure::Shape(_), ForwardMethod::Analytic) => {
                return Err(Error::Config("the analytic forward model needs a disk structure".into()))
            }
            (Structure::Disks(d), ForwardMethod::Bem) => Self::bem(&d.to_shape(nodes), h, nodes)?,
            (Structure::Shape(s), _) => Self::bem(s, h, nodes)?,
        })
    }

    fn bem(shape: &crate::model::LayeredShape, h: &HarmonicBackground, nodes: usize) -> Result<Self> {
        let system = assemble(shape, nodes)?;
        let densities = solve_densities(&system, h)?;
        Ok(Forward::Bem(Box::new((system, densities))))
    }

    pub fn eval(&self, x: &Point) -> Result<f64> {
        match self {
            Forward::Analytic(d, h) => field_eval(d, h, x),
            Forward::Bem(b) => far_field_eval(&b.0, &b.1, x),
        }
    }

    /// Evaluates at many points in parallel; output order follows `points`.
    pub fn eval_many(&self, points: &[Point]) -> Result<Vec<f64>> {
        points.par_iter().map(|p| self.eval(p)).collect()
    }

    pub fn is_exterior(&self, x: &Point) -> bool {
        match self {
            Forward::Analytic(d, _) => (x - d.center).norm() > d.outer_radius(),
            Forward::Bem(b) => b.0.is_exterior(x),
        }
    }
}

/// Synthetic data: noiseless and noisy samples at the measurement points.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub measurement: MeasurementSet,
    /// `u - H` before noise.
    pub clean: Vec<f64>,
    /// RMS of `clean`; the noise level is relative to it.
    pub scale: f64,
}

pub fn forward_for(config: &ExperimentConfig) -> Result<Forward> {
    let structure = config.validate()?;
    Forward::new(&structure, &config.background, config.forward.method, config.forward.nodes)
}

/// Samples `u = H + (u - H)` at the configured points and adds seeded
/// Gaussian noise of standard deviation `noise * rms(u - H)`.
pub fn synth(config: &ExperimentConfig) -> Result<Synthetic> {
    let forward = forward_for(config)?;
    let points = config.measurement.points();
    let clean = forward.eval_many(&points)?;
    let scale = (clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64).sqrt();
    let h = &config.background;
    let mut values: Vec<f64> = points.iter().zip(&clean).map(|(p, s)| h.eval(p) + s).collect();
    let mut sigma = None;
    if config.noise > 0.0 {
        let seed = config.seed.ok_or_else(|| Error::Config("a seed is required when noise is positive".into()))?;
        let std = config.noise * scale;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut values {
            *v += std * rng.sample::<f64, _>(StandardNormal);
        }
        sigma = Some(std);
    }
    let mut measurement =
        MeasurementSet::new(points, values, h.clone(), config.measurement.center(), config.enclosing_radius())?;
    if let Some(s) = sigma {
        measurement = measurement.with_noise(s);
    }
    Ok(Synthetic { measurement, clean, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workbench::config::{parse_config, ForwardMethod};
    use std::path::Path;

    const CONFIG: &str = r#"{
        "structure": {"kind": "disks", "radii": [1.0, 0.6, 0.3], "sigmas": [2.0, 5.0, 0.5], "center": [0.1, -0.05]},
        "background": {"terms": [{"n": 1, "ac": 1.0}, {"n": 2, "ac": 0.2, "as": 0.1}, {"n": 3, "as": 0.05}]},
        "measurement": {"kind": "circle", "radius": 3.0, "count": 200}
    }"#;

    fn config(overrides: &[&str]) -> ExperimentConfig {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        parse_config(CONFIG, Path::new("c.json"), &o).unwrap()
    }

    #[test]
    fn noiseless_synth_is_deterministic() {
        let c = config(&[]);
        assert_eq!(synth(&c).unwrap(), synth(&c).unwrap());
    }

    #[test]
    fn noise_is_seeded() {
        let a = synth(&config(&["noise=1e-3", "seed=1"])).unwrap();
        let b = synth(&config(&["noise=1e-3", "seed=1"])).unwrap();
        let c = synth(&config(&["noise=1e-3", "seed=2"])).unwrap();
        assert_eq!(a.measurement.values, b.measurement.values);
        assert_ne!(a.measurement.values, c.measurement.values);
    }

    #[test]
    fn bem_and_analytic_agree() {
        let a = synth(&config(&[])).unwrap();
        let mut c = config(&[]);
        c.forward.method = ForwardMethod::Bem;
        let b = synth(&c).unwrap();
        for (x, y) in a.clean.iter().zip(&b.clean) {
            assert!((x - y).abs() <= 1e-6 * a.scale, "{x} vs {y}");
        }
    }

    #[test]
    fn noise_level_is_relative_to_scattered_rms() {
        let c = config(&["noise=1e-3", "seed=11", "measurement.count=10000"]);
        let s = synth(&c).unwrap();
        let h = &c.background;
        let diffs: Vec<f64> = s
            .measurement
            .points
            .iter()
            .zip(&s.measurement.values)
            .zip(&s.clean)
            .map(|((p, u), clean)| (u - h.eval(p) - clean) / s.scale)
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64).sqrt();
        assert!((sd / 1e-3 - 1.0).abs() < 0.1, "sample sd {sd}");
        assert_eq!(s.measurement.noise, Some(1e-3 * s.scale));
    }

    #[test]
    fn analytic_needs_disks() {
        let shape = r#"{
            "structure": {"kind": "shape", "sigmas": [3.0],
                "curves": [{"cos_x": [0.0, 1.0], "sin_y": [0.0, 0.8], "nodes": 64}]},
            "background": {"terms": [{"n": 1, "ac": 1.0}]},
            "measurement": {"kind": "circle", "radius": 2.0, "count": 16},
            "forward": {"method": "analytic"}
        }"#;
        let c = parse_config(shape, Path::new("s.json"), &[]).unwrap();
        assert!(matches!(synth(&c), Err(Error::Config(_))));
    }
}
