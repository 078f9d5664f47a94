//! `strata`: batch front end for the forward and inverse solvers.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use strata_core::bem::{assemble, cgpt, gpt, np_spectrum, spectrum_bounds};
use strata_core::disks::{cert_matrices, multipole, neutral_shell, CertMatrices};
use strata_core::inverse::invert;
use strata_core::workbench::{
    emit_plotdata, emit_report, forward_for, load_config, measurement_for, synth, write_json, write_measurement,
    ExperimentConfig, PlotSeries, Structure,
};
use strata_core::{contrasts_of, Error, LayeredShape};

#[derive(Debug, Parser)]
#[command(name = "strata", version, about = "Forward and inverse solvers for layered conductivity inclusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output file for machine-readable results
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Override a config entry by dotted path, e.g. inversion.n_max=12
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Random seed; replaces the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print timings and intermediate details to stderr
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate u - H at the measurement points or on the configured grid
    Forward,
    /// Tabulate generalized polarization tensors of the structure
    Gpt,
    /// Eigenvalues of the discretized Neumann-Poincaré block operator
    Spectrum,
    /// Multipole coefficients c_n of a disk structure
    Multipoles,
    /// Recover center, radii and conductivities from a measurement
    Invert,
    /// Certificate determinants det L_N and det R_N at the configured orders
    Certify,
    /// Shell conductivity making a coated disk neutral
    Neutral {
        /// Core conductivity
        #[arg(long)]
        sigma2: f64,
        /// Core area fraction r2^2 / r1^2
        #[arg(long)]
        f1: f64,
        /// Conductivity of the surrounding medium
        #[arg(long, default_value_t = 1.0)]
        sigma0: f64,
    },
    /// Write synthetic measurement samples
    Synth,
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}\n\nUsage: strata <COMMAND> --config <PATH> [--out <PATH>] [--set <KEY=VALUE>]... [--seed <SEED>] [--verbose]\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    if let Command::Neutral { sigma2, f1, sigma0 } = cli.command {
        return neutral(cli, sigma0, sigma2, f1);
    }
    let path = cli.config.as_deref().ok_or_else(|| Failure::Usage("--config is required".into()))?;
    if !path.is_file() {
        return Err(Failure::Usage(format!("config file {} does not exist", path.display())));
    }
    let mut config = load_config(path, &cli.set)?;
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    let started = Instant::now();
    match cli.command {
        Command::Forward => forward(cli, &config),
        Command::Gpt => gpt_table(cli, &config),
        Command::Spectrum => spectrum(cli, &config),
        Command::Multipoles => multipoles(cli, &config),
        Command::Invert => inversion(cli, &config),
        Command::Certify => certify(cli, &config),
        Command::Synth => synthesize(cli, &config),
        Command::Neutral { .. } => unreachable!("handled above"),
    }?;
    if cli.verbose {
        eprintln!("finished in {:.3} s", started.elapsed().as_secs_f64());
    }
    Ok(())
}

fn shape_of(structure: &Structure, nodes: usize) -> LayeredShape {
    match structure {
        Structure::Disks(d) => d.to_shape(nodes),
        Structure::Shape(s) => s.clone(),
    }
}

fn write_series(out: Option<&Path>, series: &PlotSeries) -> Outcome {
    if let Some(path) = out {
        emit_plotdata(series, path)?;
    }
    Ok(())
}

fn forward(cli: &Cli, config: &ExperimentConfig) -> Outcome {
    let model = forward_for(config)?;
    let points = match &config.forward.grid {
        Some(grid) => grid.points().into_iter().filter(|p| model.is_exterior(p)).collect(),
        None => config.measurement.points(),
    };
    let values = model.eval_many(&points)?;
    let mut series = PlotSeries::new(&["x", "y", "u_minus_h"]);
    for (p, v) in points.iter().zip(&values) {
        series.push(vec![p[0], p[1], *v]);
    }
    write_series(cli.out.as_deref(), &series)?;
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("forward: {} points, max |u - H| = {peak:.6e}", points.len());
    Ok(())
}

fn gpt_table(cli: &Cli, config: &ExperimentConfig) -> Outcome {
    let structure = config.validate()?;
    let system = assemble(&shape_of(&structure, config.forward.nodes), config.forward.nodes)?;
    let table = gpt(&system, config.gpt.degree)?;
    if let Some(path) = &cli.out {
        let file = std::fs::File::create(path).map_err(|source| Error::Io { path: path.clone(), source })?;
        table.write_csv(std::io::BufWriter::new(file))?;
    }
    let m = table.first_order();
    println!("gpt: {} entries up to degree {}", table.len(), config.gpt.degree);
    println!("M = [[{:.10e}, {:.10e}], [{:.10e}, {:.10e}]]", m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    Ok(())
}

fn spectrum(cli: &Cli, config: &ExperimentConfig) -> Outcome {
    let structure = config.validate()?;
    let system = assemble(&shape_of(&structure, config.forward.nodes), config.forward.nodes)?;
    let values = np_spectrum(&system);
    let mut series = PlotSeries::new(&["index", "re", "im"]);
    for (k, v) in values.iter().enumerate() {
        series.push(vec![k as f64, v.re, v.im]);
    }
    write_series(cli.out.as_deref(), &series)?;
    let b = spectrum_bounds(&values);
    println!(
        "spectrum: {} eigenvalues, real parts in [{:.6e}, {:.6e}], max |imag| = {:.3e}",
        values.len(),
        b.min_re,
        b.max_re,
        b.max_abs_im
    );
    Ok(())
}

fn multipoles(cli: &Cli, config: &ExperimentConfig) -> Outcome {
    let structure = config.validate()?;
    let orders = config.multipole_orders();
    let values: Vec<f64> = match &structure {
        Structure::Disks(d) => orders.iter().map(|&n| multipole(d, n)).collect::<Result<_, _>>()?,
        Structure::Shape(s) => {
            // radial part of the contracted tensors; exact only for rotationally symmetric shapes
            let max = orders.iter().copied().max().unwrap_or(1);
            let block = cgpt(&assemble(s, config.forward.nodes)?, max)?;
            orders.iter().map(|&n| block.radial_multipole(n)).collect()
        }
    };
    let mut series = PlotSeries::new(&["n", "c_n"]);
    for (&n, &c) in orders.iter().zip(&values) {
        series.push(vec![n as f64, c]);
        if cli.verbose {
            eprintln!("c_{n} = {c:.16e}");
        }
    }
    write_series(cli.out.as_deref(), &series)?;
    println!("multipoles: {} orders", orders.len());
    if let (Some(&n), Some(&c)) = (orders.first(), values.first()) {
        println!("c_{n} = {c:.10e}");
    }
    Ok(())
}

fn residual_path(out: &Path) -> PathBuf {
    out.with_extension("residuals.csv")
}

fn inversion(cli: &Cli, config: &ExperimentConfig) -> Outcome {
    if config.data.is_none() {
        config.validate()?;
    }
    let m = measurement_for(config)?;
    let report = invert(&m, &config.inversion)?;
    if let Some(path) = &cli.out {
        emit_report(&report, path)?;
        let mut series = PlotSeries::new(&["n", "measured", "model", "uncertainty"]);
        for r in &report.residuals {
            series.push(vec![r.n as f64, r.measured, r.model, r.uncertainty]);
        }
        emit_plotdata(&series, &residual_path(path))?;
    }
    if cli.verbose {
        for a in &report.attempts {
            eprintln!("orders {:?}: converged {}, certificate {}", a.orders, a.converged, a.certificate_passed);
        }
    }
    println!("center: ({:.10}, {:.10})", report.center[0], report.center[1]);
    println!("radii:  {}", join(&report.radii));
    println!("sigmas: {}", join(&report.sigmas));
    println!(
        "certificate: {} at orders {:?}; weighted rms {:.3e}{}",
        if report.certificate_passed { "passed" } else { "failed" },
        report.sigma_orders,
        report.weighted_rms,
        if report.misfit { " (misfit: check the layer count)" } else { "" }
    );
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.10}")).collect::<Vec<_>>().join(", ")
}

#[derive(Serialize)]
struct Certificate {
    orders: Vec<usize>,
    #[serde(flatten)]
    matrices: CertMatrices,
    passed: bool,
}

fn certify(cli: &Cli, config: &ExperimentConfig) -> Outcome {
    let Structure::Disks(d) = config.validate()? else {
        return Err(Failure::Domain(Error::Config("certify needs a disk structure".into())));
    };
    let orders = config.orders.clone().unwrap_or_else(|| (1..=d.radii.len()).collect());
    let lambdas = contrasts_of(&d)?.lambdas;
    let matrices = cert_matrices(&lambdas, &d.radii, &orders)?;
    let passed = matrices.passes(config.inversion.certificate_threshold);
    println!("det L = {:.10e} (relative {:.3e})", matrices.det_left, matrices.rel_left);
    println!("det R = {:.10e} (relative {:.3e})", matrices.det_right, matrices.rel_right);
    println!("certificate at orders {orders:?}: {}", if passed { "passed" } else { "failed" });
    if let Some(path) = &cli.out {
        write_json(path, &Certificate { orders, matrices, passed })?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Neutral {
    sigma0: f64,
    sigma1: f64,
    sigma2: f64,
    f1: f64,
}

fn neutral(cli: &Cli, sigma0: f64, sigma2: f64, f1: f64) -> Outcome {
    let sigma1 = neutral_shell(sigma0, sigma2, f1)?;
    println!("sigma_1 = {sigma1:.16}");
    println!("sigma_0 = {sigma0}");
    if let Some(path) = &cli.out {
        write_json(path, &Neutral { sigma0, sigma1, sigma2, f1 })?;
    }
    Ok(())
}

fn synthesize(cli: &Cli, config: &ExperimentConfig) -> Outcome {
    let s = synth(config)?;
    if let Some(path) = &cli.out {
        write_measurement(path, &s.measurement)?;
    }
    println!(
        "synth: {} samples, rms(u - H) = {:.6e}, noise std = {:.3e}",
        s.measurement.len(),
        s.scale,
        s.measurement.noise.unwrap_or(0.0)
    );
    Ok(())
}
