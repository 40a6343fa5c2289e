//! The `bd-moments` binary: outputs and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bd-moments"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A small flagship configuration with density `rho`.
fn small_config(dir: &Path, name: &str, rho: f64) -> PathBuf {
    let text = format!(
        r#"
[model]
family = "power_law"
gamma = 0.5
z_s = 1.0
q = 1.0
mu = 0.5

[initial]
shape = "monodisperse"
rho = {rho}

[run]
n = 300
t_end = 60.0
outputs = 120
rel_tol = 1e-8
tail_threshold = 1e-6

[moments]
k = [2.0]
stretched = []

[omega]
strategy = "margin"
fraction = 0.1

[supersolution]
delta = 1.0
tol_tail = 1e-6
"#
    );
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn config_template_round_trips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["config-template"]);
    assert_eq!(code(&out), 0);
    let path = dir.path().join("template.toml");
    std::fs::write(&path, &out.stdout).unwrap();
    let out = run(&["verify", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["growth_bound"]["holds"], true);
    assert_eq!(report["z_s_reference"], 1.0);
}

#[test]
fn equilibrium_prints_critical_values_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "c.toml", 1.0);
    let out = run(&[
        "equilibrium",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let z_bar: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("z_bar="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((z_bar - 0.5541532).abs() < 5e-7);
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("equilibrium.json")).unwrap())
            .unwrap();
    assert_eq!(json["z_s"], 1.0);
    let profile = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert_eq!(profile.lines().next(), Some("i,Q_i"));
}

#[test]
fn simulate_writes_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "c.toml", 1.0);
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let rows = csv
        .lines()
        .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
        .count();
    assert_eq!(rows, 121);
    let to_stdout = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(stdout(&to_stdout), csv);
}

#[test]
fn experiment_passes_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "c.toml", 1.0);
    let out = run(&[
        "experiment",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["verdict"], true);
}

#[test]
fn supersolution_for_config_and_random_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "c.toml", 1.0);
    let out = run(&[
        "supersolution",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let witness: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(witness["verdict"]["holds"], true);
    assert_eq!(witness["dominates_initial_tail"], true);
    assert!(dir.path().join("supersolution.csv").is_file());

    let out = run(&["supersolution", "--random", "8", "--seed", "11"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("8 of 8 cases passed"));
}

#[test]
fn sweep_writes_one_report_per_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_config(dir.path(), "low.toml", 0.5);
    let b = small_config(dir.path(), "high.toml", 1.5);
    let out = run(&[
        "sweep",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--workers",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    for stem in ["low", "high"] {
        assert!(dir.path().join(stem).join("summary.json").is_file());
    }
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "c.toml", 1.0);

    let missing_out = run(&[
        "experiment",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        "/nonexistent/bd",
    ]);
    assert_eq!(code(&missing_out), 10);
    let missing_cfg = run(&["verify", "--config", "/nonexistent/c.toml"]);
    assert_eq!(code(&missing_cfg), 10);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "bogus = 1\n").unwrap();
    let out = run(&["verify", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 11);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    // moment order below the admissible range
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("k = [2.0]", "k = [1.2]");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(
        code(&run(&["experiment", "--config", cfg.to_str().unwrap()])),
        11
    );
}
