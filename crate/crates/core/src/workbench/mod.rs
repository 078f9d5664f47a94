//! Experiment plumbing: JSON configs with dotted overrides, synthetic
//! measurements, and the report, measurement and plot-data file formats.

mod config;
mod io;
mod synth;

pub use config::{
    apply_override, parse_config, read_config, ExperimentConfig, ForwardMethod, ForwardOptions, Geometry, GptOptions,
    Grid, Structure, StructureSpec, GEOMETRY_MARGIN,
};
pub use io::{
    emit_plotdata, emit_report, format_real, read_json, read_measurement, read_plotdata, read_report, read_table,
    write_json, write_measurement, write_table, MeasurementTable, PlotSeries, Table,
};
pub use synth::{forward_for, synth, Forward, Synthetic};

use std::path::Path;

use crate::error::Result;
use crate::inverse::MeasurementSet;

/// Reads a config; a relative `data` path is taken relative to the config
/// file.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut config = read_config(path, overrides)?;
    if let (Some(data), Some(dir)) = (&config.data, path.parent()) {
        if data.is_relative() {
            config.data = Some(dir.join(data));
        }
    }
    Ok(config)
}

/// The measurement to invert: the configured data file if any, otherwise
/// synthetic samples.
///
/// A file's `h` column is used only when the config gives a constant
/// background; a harmonic fit of degree `n_max` then stands in for `H`.
pub fn measurement_for(config: &ExperimentConfig) -> Result<MeasurementSet> {
    let Some(path) = &config.data else {
        return Ok(synth(config)?.measurement);
    };
    let table = read_measurement(path)?;
    let center = config.measurement.center();
    let radius = config.enclosing_radius();
    let m = match table.h {
        Some(h) if config.background.is_constant() => {
            MeasurementSet::from_tabulated(table.points, table.values, h, center, radius, config.inversion.n_max)?
        }
        _ => MeasurementSet::new(table.points, table.values, config.background.clone(), center, radius)?,
    };
    Ok(if config.noise > 0.0 {
        // relative level against the data's own scattered RMS
        let s = m.scattered();
        let rms = (s.norm_squared() / s.len() as f64).sqrt();
        m.clone().with_noise(config.noise * rms)
    } else {
        m
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::{invert, InverseOptions};

    const CONFIG: &str = r#"{
        "structure": {"kind": "disks", "radii": [1.0, 0.5], "sigmas": [3.0, 0.5], "center": [0.1, 0.2]},
        "background": {"terms": [{"n": 1, "ac": 1.0}, {"n": 2, "ac": 0.3, "as": 0.2}, {"n": 3, "ac": 0.05}, {"n": 4, "as": 0.02}]},
        "measurement": {"kind": "circle", "radius": 3.0, "count": 256},
        "inversion": {"layers": 2, "n_max": 4}
    }"#;

    fn dir() -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("strata-wb-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn report_round_trip() {
        let c = parse_config(CONFIG, Path::new("c.json"), &[]).unwrap();
        let m = measurement_for(&c).unwrap();
        let r = invert(&m, &c.inversion).unwrap();
        let p = dir().join("report.json");
        emit_report(&r, &p).unwrap();
        assert_eq!(read_report(&p).unwrap(), r);
    }

    #[test]
    fn measurement_file_matches_synthesis() {
        let d = dir();
        let c = parse_config(CONFIG, Path::new("c.json"), &[]).unwrap();
        let m = synth(&c).unwrap().measurement;
        write_measurement(&d.join("m.csv"), &m).unwrap();
        std::fs::write(d.join("c.json"), CONFIG).unwrap();
        let from_file = load_config(&d.join("c.json"), &["data=m.csv".to_string()]).unwrap();
        assert_eq!(measurement_for(&from_file).unwrap(), m);
    }

    #[test]
    fn tabulated_background_from_file() {
        let d = dir();
        let c = parse_config(CONFIG, Path::new("c.json"), &[]).unwrap();
        write_measurement(&d.join("t.csv"), &synth(&c).unwrap().measurement).unwrap();
        let overrides = ["data=t.csv".to_string(), "background={}".to_string()];
        std::fs::write(d.join("c.json"), CONFIG).unwrap();
        let cfg = load_config(&d.join("c.json"), &overrides).unwrap();
        let m = measurement_for(&cfg).unwrap();
        assert!(m.tabulated.is_some());
        let r = invert(&m, &InverseOptions { layers: 2, n_max: 4, ..InverseOptions::default() }).unwrap();
        assert!((r.center - crate::Point::new(0.1, 0.2)).norm() < 1e-6);
    }
}
