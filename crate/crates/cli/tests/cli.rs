use std::path::Path;
use std::process::{Command, Output};

use fhlab_cli::config::Scenario;
use fhlab_cli::report::{read_manifest, sha256_hex};
use serde_json::Value;

fn fhlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fhlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("FHLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

const X1: &str = r#"
name = "x1-frequency"
s = 0.5

[field]
kind = "builtin"
terms = [{ name = "x1" }]

[[experiment]]
kind = "frequency"
radii = [0.1, 0.2, 0.3]
"#;

const SMALL_GRID: &str = r#"
name = "four-experiments"
s = 0.4
seed = 3

[grid]
length_x = 6.283185307179586
points_x = 16
time_window = 2.0
points_t = 16

[field]
kind = "random"
modes = 2
amplitude = 0.3
offset = 2.0
max_k = 2
max_m = 1

[[experiment]]
kind = "op-check"

[[experiment]]
kind = "extend-check"

[[experiment]]
kind = "frequency"
radii = [0.2, 0.4]

[[experiment]]
kind = "blowup"
radii = [0.4, 0.2]
tolerance = 1.0
"#;

#[test]
fn x1_frequency_has_constant_half() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "x1.toml", X1);
    let out = fhlab(&["frequency", "--config", &cfg, "--out-dir", "out"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("out/00-frequency.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, ["r", "H", "I", "N", "N1", "psi", "adjusted", "dH_fd", "dH_formula", "flag"]);
    let n_col = header.iter().position(|h| *h == "N").unwrap();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let n: f64 = row[n_col].parse().unwrap();
        assert!((n - 0.5).abs() < 1e-10);
    }
    let rep = report(&tmp.path().join("out"));
    assert_eq!(rep["experiments"][0]["status"], "pass");
}

#[test]
fn negative_s_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &X1.replace("s = 0.5", "s = -0.5"));
    let out = fhlab(&["run", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("field `s`") && err.contains("line 3"), "{err}");
}

#[test]
fn grid_only_experiment_on_builtin_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &format!("{X1}\n[[experiment]]\nkind = \"op-check\"\n"));
    let out = fhlab(&["run", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiment[1].kind"));
}

#[test]
fn four_experiments_give_four_outputs_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "grid.toml", SMALL_GRID);
    let out = fhlab(&["run", "--config", &cfg, "--out-dir", "out", "--threads", "2"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let dir = tmp.path().join("out");
    let rep = report(&dir);
    let exps = rep["experiments"].as_array().unwrap();
    assert_eq!(exps.len(), 4);
    let files: Vec<&str> = exps.iter().map(|e| e["outputs"][0].as_str().unwrap()).collect();
    assert_eq!(files, ["00-op-check.csv", "01-extend-check.csv", "02-frequency.csv", "03-blowup.csv"]);
    let manifest = read_manifest(&dir).unwrap();
    assert_eq!(manifest.len(), 5);
    for (name, hash) in manifest {
        assert_eq!(sha256_hex(&std::fs::read(dir.join(&name)).unwrap()), hash, "{name}");
    }
    assert_eq!(rep["threads"], 2);
}

#[test]
fn echoed_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "x1.toml", X1);
    let out = fhlab(&["run", "--config", &cfg, "--out-dir", "out", "--tolerance-scale", "2"], tmp.path());
    assert!(out.status.success());
    let rep = report(&tmp.path().join("out"));
    let echoed = Scenario::parse(rep["config"].as_str().unwrap()).unwrap();
    let mut original = Scenario::parse(X1).unwrap();
    original.experiments = original.experiments.iter().map(|e| e.scaled(2.0)).collect();
    assert_eq!(echoed, original);
}

#[test]
fn failed_experiment_exits_with_one_and_keeps_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "strict.toml", &format!("{X1}tolerance = 1e-30\n"));
    let out = fhlab(&["run", "--config", &cfg, "--out-dir", "out"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let dir = tmp.path().join("out");
    assert!(dir.join("00-frequency.csv").exists());
    assert!(dir.join("MANIFEST").exists());
    assert_eq!(report(&dir)["experiments"][0]["status"], "fail");
}

#[test]
fn thread_count_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "x1.toml", X1);
    let out = Command::new(env!("CARGO_BIN_EXE_fhlab"))
        .args(["run", "--config", &cfg, "--out-dir", "out"])
        .current_dir(tmp.path())
        .env("FHLAB_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(report(&tmp.path().join("out"))["threads"], 3);
}

#[test]
fn seed_controls_random_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_GRID.split("[[experiment]]").next().unwrap().to_string() + "[[experiment]]\nkind = \"op-check\"\n";
    let cfg = write(tmp.path(), "grid.toml", &text);
    let csv = |dir: &str, seed: &str| {
        let out = fhlab(&["op-check", "--config", &cfg, "--out-dir", dir, "--seed", seed], tmp.path());
        assert!(out.status.success());
        std::fs::read(tmp.path().join(dir).join("00-op-check.csv")).unwrap()
    };
    assert_eq!(csv("a", "5"), csv("b", "5"));
    assert_ne!(csv("c", "5"), csv("d", "6"));
}

#[test]
fn calibrate_prints_constant_and_psi() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
name = "manufactured-small"
s = 0.5

[grid]
length_x = 6.283185307179586
points_x = 16
time_window = 2.0
points_t = 16

[field]
kind = "spectrum"
modes = [{ k = [0], m = 0, re = 2.0 }, { k = [1], m = 0, re = 0.5 }, { k = [1], m = 1, re = 0.0, im = 0.25 }]

[potential]
mode = "manufactured"

[[experiment]]
kind = "calibrate-C"
radii = [0.2, 0.4, 0.6]
"#;
    let cfg = write(tmp.path(), "m.toml", text);
    let out = fhlab(&["calibrate-C", "--config", &cfg, "--out-dir", "out"], tmp.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("smallest monotonizing C ="), "{stdout}");
    assert_eq!(stdout.matches("psi(r)").count(), 3);
    let csv = std::fs::read_to_string(tmp.path().join("out/00-calibrate-C.csv")).unwrap();
    assert!(csv.starts_with("r,psi,N,adjusted\n"));
}

#[test]
fn subcommand_without_declared_experiment_uses_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "x1.toml", X1);
    let out = fhlab(&["vanishing-order", "--config", &cfg, "--out-dir", "out"], tmp.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(tmp.path().join("out/00-vanishing-order.csv")).unwrap();
    assert!(csv.starts_with("r,sup,log_slope\n"));
    assert_eq!(report(&tmp.path().join("out"))["experiments"][0]["status"], "report-only");
}

#[test]
fn bundled_scenarios_parse_and_list() {
    for (name, text) in fhlab_cli::BUNDLED_SCENARIOS {
        let sc = Scenario::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&sc.name, name);
    }
    let tmp = tempfile::tempdir().unwrap();
    let out = fhlab(&["scenarios"], tmp.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("x1-frequency"));
    let out = fhlab(&["run", "--scenario", "nope"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn counterexample_scenario_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fhlab(&["run", "--scenario", "counterexample", "--out-dir", "out"], tmp.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("infinite"));
}
