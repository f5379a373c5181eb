//! Fixed config + seed must reproduce the stored CSV files byte for byte.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SEED: &str = "42";

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conesheet"))
        .args(["--seed", SEED, "--out"])
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn check(subcommand: &str, config: &str, produced: &str, golden: &str) {
    let cfg = golden_dir().join(config);
    let cfg = cfg.to_str().unwrap();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&[subcommand, cfg], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(dir.path().join(produced)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "{subcommand}: two runs differ");
    let expected = std::fs::read(golden_dir().join(golden)).unwrap();
    assert!(outputs[0] == expected, "{subcommand}: output differs from {golden}");
    println!("golden {subcommand}: {} bytes reproduced", expected.len());
}

#[test]
fn ansatz_energy_golden() {
    check("ansatz-energy", "ansatz_energy.json", "ansatz_energy.csv", "ansatz_energy.csv");
}

#[test]
fn isoperimetric_golden() {
    check("isoperimetric", "isoperimetric.json", "isoperimetric.csv", "isoperimetric.csv");
}

#[test]
fn minimize_trace_golden() {
    check("minimize", "minimize.json", "trace.csv", "minimize_trace.csv");
}

#[test]
fn seed_changes_randomized_output() {
    let cfg = golden_dir().join("isoperimetric.json");
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_conesheet"))
        .args(["--seed", "43", "--out"])
        .arg(dir.path())
        .args(["isoperimetric", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
    let got = std::fs::read(dir.path().join("isoperimetric.csv")).unwrap();
    assert_ne!(got, std::fs::read(golden_dir().join("isoperimetric.csv")).unwrap());
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{ "m0": 0.5, "h_lst": [0.01] }"#).unwrap();
    let o = run(&["ansatz-energy", cfg.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("h_lst"), "{err}");

    std::fs::write(&cfg, r#"{ "m0": 0.5, "h_list": [0.01, 0.02, 0.005] }"#).unwrap();
    let o = run(&["sweep", cfg.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("h_list"));
}

#[test]
fn single_point_sweep_refuses_fit_but_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("one.json");
    std::fs::write(&cfg, r#"{ "m0": 0.5, "h_list": [0.01] }"#).unwrap();
    let o = run(&["sweep", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = std::fs::read_to_string(dir.path().join("fit.json")).unwrap();
    assert!(fit.contains("at least 4"), "{fit}");
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn every_subcommand_runs_on_example_configs() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (cmd, file, artifact) in [
        ("sample", "sample.json", "energy.csv"),
        ("geodesics", "geodesics.json", "polar.csv"),
        ("curvature", "curvature.json", "kappa_profile.csv"),
        ("degree", "degree.json", "degree.csv"),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&[cmd, root.join(file).to_str().unwrap()], dir.path());
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(dir.path().join(artifact)).unwrap();
        assert!(text.lines().count() > 1, "{cmd}");
    }
}

#[test]
fn csv_headers_carry_units() {
    for file in ["ansatz_energy.csv", "isoperimetric.csv", "minimize_trace.csv"] {
        let text = std::fs::read_to_string(golden_dir().join(file)).unwrap();
        let header = text.lines().next().unwrap();
        for col in header.split(',') {
            let labeled = ["_dimensionless", "_ref_units", "_per_ref_unit", "_rad", "_count"].iter().any(|u| col.ends_with(u));
            let categorical = ["sample", "pass", "stage_p", "iteration", "functional"].contains(&col);
            assert!(labeled || categorical, "{file}: column `{col}` has no unit");
        }
    }
}
