use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::inverse::InverseOptions;
use crate::model::{ConcentricDisks, HarmonicBackground, LayeredShape, Point, SmoothCurve};

/// Smallest ratio of measurement radius to inclusion extent.
pub const GEOMETRY_MARGIN: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StructureSpec {
    Disks {
        radii: Vec<f64>,
        sigmas: Vec<f64>,
        #[serde(default = "Point::zeros")]
        center: Point,
    },
    Shape {
        curves: Vec<SmoothCurve>,
        sigmas: Vec<f64>,
    },
}

/// A validated structure.
#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Disks(ConcentricDisks),
    Shape(LayeredShape),
}

impl StructureSpec {
    pub fn build(&self) -> Result<Structure> {
        Ok(match self {
            StructureSpec::Disks { radii, sigmas, center } => {
                Structure::Disks(ConcentricDisks::with_center(radii.clone(), sigmas.clone(), *center)?)
            }
            StructureSpec::Shape { curves, sigmas } => {
                Structure::Shape(LayeredShape::new(curves.clone(), sigmas.clone())?)
            }
        })
    }
}

impl Structure {
    /// Largest distance from `origin` to the outer interface.
    pub fn extent_from(&self, origin: &Point) -> f64 {
        match self {
            Structure::Disks(d) => (d.center - origin).norm() + d.outer_radius(),
            Structure::Shape(s) => {
                let c = &s.curves[0];
                c.sample(c.nodes().max(256)).points.iter().map(|p| (p - origin).norm()).fold(0.0, f64::max)
            }
        }
    }

    pub fn layer_count(&self) -> usize {
        match self {
            Structure::Disks(d) => d.radii.len(),
            Structure::Shape(s) => s.curves.len(),
        }
    }
}

/// Where the potential is sampled. Angles are in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    Circle {
        #[serde(default = "Point::zeros")]
        center: Point,
        radius: f64,
        count: usize,
    },
    Arc {
        #[serde(default = "Point::zeros")]
        center: Point,
        radius: f64,
        count: usize,
        start: f64,
        end: f64,
    },
}

impl Geometry {
    pub fn center(&self) -> Point {
        match self {
            Geometry::Circle { center, .. } | Geometry::Arc { center, .. } => *center,
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            Geometry::Circle { radius, .. } | Geometry::Arc { radius, .. } => *radius,
        }
    }

    pub fn points(&self) -> Vec<Point> {
        let at = |c: &Point, r: f64, t: f64| Point::new(c[0] + r * t.cos(), c[1] + r * t.sin());
        match self {
            Geometry::Circle { center, radius, count } => {
                (0..*count).map(|k| at(center, *radius, std::f64::consts::TAU * k as f64 / *count as f64)).collect()
            }
            Geometry::Arc { center, radius, count, start, end } => {
                let steps = (*count).max(2) - 1;
                (0..*count).map(|k| at(center, *radius, start + (end - start) * k as f64 / steps as f64)).collect()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (radius, count) = (self.radius(), self.points().len());
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("measurement radius {radius} must be positive")));
        }
        if count == 0 {
            return Err(Error::Config("measurement count must be positive".into()));
        }
        if let Geometry::Arc { start, end, .. } = self {
            if !(start < end && end - start <= std::f64::consts::TAU) {
                return Err(Error::Config(format!("arc [{start}, {end}] must be increasing and at most 2 pi long")));
            }
        }
        if !self.center().iter().all(|v| v.is_finite()) {
            return Err(Error::Config("measurement center is not finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMethod {
    /// Closed form for disks, boundary integrals for shapes.
    #[default]
    Auto,
    Analytic,
    Bem,
}

/// Rectangular evaluation grid; points inside the inclusion are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<Point> {
        let axis = |r: [f64; 2], n: usize| -> Vec<f64> {
            if n <= 1 {
                vec![r[0]]
            } else {
                (0..n).map(|k| r[0] + (r[1] - r[0]) * k as f64 / (n - 1) as f64).collect()
            }
        };
        let (xs, ys) = (axis(self.x, self.nx), axis(self.y, self.ny));
        ys.iter().flat_map(|&y| xs.iter().map(move |&x| Point::new(x, y))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardOptions {
    pub method: ForwardMethod,
    /// Quadrature nodes per interface for boundary-integral solves.
    pub nodes: usize,
    /// Evaluate on this grid instead of the measurement points.
    pub grid: Option<Grid>,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions { method: ForwardMethod::Auto, nodes: 256, grid: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GptOptions {
    /// Largest multi-index degree of the GPT table.
    pub degree: u32,
}

impl Default for GptOptions {
    fn default() -> Self {
        GptOptions { degree: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub structure: StructureSpec,
    pub background: HarmonicBackground,
    pub measurement: Geometry,
    /// Gaussian noise level relative to the RMS of `u - H`.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Radius of the circle declared to contain the inclusion, about the
    /// measurement center. Defaults to the measurement radius over the margin.
    #[serde(default)]
    pub enclosing_radius: Option<f64>,
    /// Measurement file used by `invert` instead of synthetic data.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Orders for `multipoles` and `certify`; defaults to `1..=n_max` and
    /// the first `layers` orders.
    #[serde(default)]
    pub orders: Option<Vec<usize>>,
    #[serde(default)]
    pub forward: ForwardOptions,
    #[serde(default)]
    pub gpt: GptOptions,
    #[serde(default)]
    pub inversion: InverseOptions,
}

impl ExperimentConfig {
    /// Checks the invariants that do not depend on the chosen subcommand and
    /// returns the built structure.
    pub fn validate(&self) -> Result<Structure> {
        let structure = self.structure.build()?;
        self.measurement.validate()?;
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise level {} must be non-negative", self.noise)));
        }
        if self.noise > 0.0 && self.seed.is_none() {
            return Err(Error::Config("a seed is required when noise is positive".into()));
        }
        if self.forward.nodes < 16 || self.forward.nodes % 2 != 0 {
            return Err(Error::Config(format!("forward.nodes = {} must be even and at least 16", self.forward.nodes)));
        }
        let extent = structure.extent_from(&self.measurement.center());
        let radius = self.measurement.radius();
        if radius < GEOMETRY_MARGIN * extent {
            return Err(Error::GeometryConflict(format!(
                "measurement radius {radius} is within {}% of the inclusion extent {extent}",
                ((GEOMETRY_MARGIN - 1.0) * 100.0).round()
            )));
        }
        if let Some(r) = self.enclosing_radius {
            if !(r >= extent && r < radius) {
                return Err(Error::Config(format!(
                    "enclosing radius {r} must lie between the inclusion extent {extent} and the measurement radius {radius}"
                )));
            }
        }
        Ok(structure)
    }

    pub fn enclosing_radius(&self) -> f64 {
        self.enclosing_radius.unwrap_or(self.measurement.radius() / GEOMETRY_MARGIN)
    }

    /// Orders for multipole tables.
    pub fn multipole_orders(&self) -> Vec<usize> {
        self.orders.clone().unwrap_or_else(|| (1..=self.inversion.n_max).collect())
    }
}

/// Reads a JSON config and applies `key=value` overrides, where `key` is a
/// dotted path (`inversion.n_max`, `structure.radii.1`) and `value` is JSON,
/// falling back to a plain string.
pub fn read_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_config(&text, path, overrides)
}

pub fn parse_config(text: &str, path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let parse_error = |message: String| Error::Parse { path: path.to_path_buf(), message };
    let mut value: Value = serde_json::from_str(text)
        .map_err(|e| parse_error(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    if overrides.is_empty() {
        // parse from text so that type errors keep their position
        return serde_json::from_str(text)
            .map_err(|e| parse_error(format!("line {}, column {}: {e}", e.line(), e.column())));
    }
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    serde_json::from_value(value).map_err(|e| parse_error(format!("after overrides: {e}")))
}

pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override `{assignment}` has an empty key")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Array(items) => {
                let index: usize =
                    part.parse().map_err(|_| Error::Config(format!("`{part}` in `{key}` must index an array")))?;
                let len = items.len();
                items
                    .get_mut(index)
                    .ok_or_else(|| Error::Config(format!("index {index} in `{key}` is out of range (length {len})")))?
            }
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just created").entry(part.to_string()).or_insert(Value::Null)
            }
            Value::Object(map) => map.entry(part.to_string()).or_insert(Value::Null),
            _ => return Err(Error::Config(format!("`{key}` descends into a scalar at `{part}`"))),
        };
        if last {
            *node = value;
            return Ok(());
        }
    }
    unreachable!("split always yields at least one part")
}
