use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde::Deserialize;
use strata_core::workbench::{read_json, read_plotdata, read_report};

fn strata(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strata")).args(args).output().expect("strata runs")
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> String {
    repo().join("configs").join(name).to_string_lossy().into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("strata-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[derive(Deserialize)]
struct Golden {
    center: [f64; 2],
    radii: Vec<f64>,
    sigmas: Vec<f64>,
    sigma_orders: Vec<usize>,
    certificate_passed: bool,
    misfit: bool,
}

#[test]
fn invert_matches_golden_report() {
    let out = scratch("invert.json");
    let run = strata(&[
        "invert",
        "--config",
        &config("three_layer.json"),
        "--set",
        "measurement.count=2048",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = read_report(&out).unwrap();
    let golden: Golden = read_json(&repo().join("crates/cli/tests/golden/three_layer_invert.json")).unwrap();

    // the golden values themselves sit close to the true structure
    let truth = ([1.0, 0.6, 0.3], [2.0, 5.0, 0.5]);
    for (g, t) in golden.radii.iter().zip(truth.0).chain(golden.sigmas.iter().zip(truth.1)) {
        assert!((g / t - 1.0).abs() < 1e-5, "golden {g} vs truth {t}");
    }

    assert!((report.center[0] - golden.center[0]).abs() < 1e-9);
    assert!((report.center[1] - golden.center[1]).abs() < 1e-9);
    for (a, b) in report.radii.iter().zip(&golden.radii).chain(report.sigmas.iter().zip(&golden.sigmas)) {
        assert!((a / b - 1.0).abs() < 1e-9, "{a} vs golden {b}");
    }
    assert_eq!(report.sigma_orders, golden.sigma_orders);
    assert_eq!(report.certificate_passed, golden.certificate_passed);
    assert_eq!(report.misfit, golden.misfit);

    let residuals = read_plotdata(&out.with_extension("residuals.csv")).unwrap();
    assert_eq!(residuals.columns, ["n", "measured", "model", "uncertainty"]);
    assert_eq!(residuals.rows.len(), report.residuals.len());
}

#[test]
fn neutral_shell_oracle() {
    let run = strata(&["neutral", "--sigma2", "3", "--f1", "0.5"]);
    assert!(run.status.success());
    let stdout = String::from_utf8(run.stdout).unwrap();
    let sigma1: f64 = stdout.lines().next().unwrap().trim_start_matches("sigma_1 = ").parse().unwrap();
    assert!((sigma1 - (2.0 * 3.0f64.sqrt() - 3.0)).abs() < 1e-15, "{stdout}");
}

#[test]
fn multipoles_of_neutral_structure_vanish_at_first_order() {
    let out = scratch("neutral_multipoles.csv");
    let run = strata(&["multipoles", "--config", &config("neutral.json"), "--out", out.to_str().unwrap()]);
    assert!(run.status.success());
    let series = read_plotdata(&out).unwrap();
    assert_eq!(series.columns, ["n", "c_n"]);
    assert_eq!(series.rows[0][0], 1.0);
    assert!(series.rows[0][1].abs() < 1e-12);
    assert!(series.rows[1][1].abs() > 1e-3);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(strata(&["bogus"]).status.code(), Some(2));
    assert_eq!(strata(&["invert"]).status.code(), Some(2));
    assert_eq!(strata(&["invert", "--config", "/nonexistent/strata.json"]).status.code(), Some(2));
    assert_eq!(strata(&["neutral", "--f1", "0.5"]).status.code(), Some(2));
    assert_eq!(strata(&["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_with_one() {
    let run = strata(&["neutral", "--sigma2", "3", "--f1", "1.5"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).starts_with("error:"));
    let run = strata(&["invert", "--config", &config("three_layer.json"), "--set", "structure.radii.0=0.1"]);
    assert_eq!(run.status.code(), Some(1));
    let run = strata(&["invert", "--config", &config("three_layer.json"), "--set", "inversion.no_such_key=1"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("no_such_key"));
}

fn long_flags(help: &str) -> BTreeSet<String> {
    help.split(|c: char| c.is_whitespace() || c == ',' || c == '[' || c == ']')
        .filter(|w| w.starts_with("--") && w.len() > 2)
        .map(|w| w.trim_end_matches(|c: char| !c.is_alphanumeric()).to_string())
        .collect()
}

#[test]
fn every_flag_is_documented() {
    let readme = std::fs::read_to_string(repo().join("README.md")).unwrap();
    let subcommands = ["forward", "gpt", "spectrum", "multipoles", "invert", "certify", "neutral", "synth"];
    let mut flags = long_flags(&String::from_utf8(strata(&["--help"]).stdout).unwrap());
    for sub in subcommands {
        assert!(readme.contains(&format!("strata {sub}")), "README lacks an example of `{sub}`");
        flags.extend(long_flags(&String::from_utf8(strata(&[sub, "--help"]).stdout).unwrap()));
    }
    assert!(flags.contains("--config") && flags.contains("--sigma2"));
    for flag in flags {
        assert!(readme.contains(&format!("`{flag}")), "README does not document {flag}");
    }
}
