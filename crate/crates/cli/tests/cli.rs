use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::Vector4;
use obscal::experiment::{read_run_series, ExperimentConfig};
use obscal::UniformSpline;

fn obscal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obscal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn dump_config_round_trips_with_overrides() {
    let o = obscal(&["--dump-config", "--seed", "17", "--out", "elsewhere"]);
    assert_eq!(code(&o), 0);
    let cfg = ExperimentConfig::from_json(&stdout(&o)).unwrap();
    let expected = ExperimentConfig {
        master_seed: 17,
        output_dir: "elsewhere".into(),
        ..ExperimentConfig::default()
    };
    assert_eq!(cfg, expected);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), r#"{"n_trials": 1, "surprise": true}"#);
    assert_eq!(code(&obscal(&["--config", &bad, "--dump-config"])), 2);
    assert_eq!(code(&obscal(&["--config", "/nonexistent/config.json", "gen"])), 2);
    let out = dir.path().to_string_lossy().into_owned();
    assert_eq!(code(&obscal(&["--out", &out, "experiment", "--method", "bogus"])), 2);
    assert_eq!(code(&obscal(&["describe", "/nonexistent.spline"])), 2);
    assert_eq!(code(&obscal(&[])), 2);
    assert_eq!(code(&obscal(&["gen", "--no-such-flag"])), 2);
}

#[test]
fn gen_optimize_simulate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let o = obscal(&["--seed", "3", "--out", &out, "gen"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let spline_path = dir.path().join("random_seed3.spline");
    assert_eq!(stdout(&o).trim(), spline_path.to_string_lossy());
    let spline = UniformSpline::load(&spline_path).unwrap();
    assert_eq!(spline.knots().len(), 15);
    let sp = spline_path.to_string_lossy().into_owned();

    assert_eq!(code(&obscal(&["--out", &out, "optimize", &sp, "--method", "random"])), 2);
    let o = obscal(&["--out", &out, "optimize", &sp, "--method", "mma"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("mma: cost"));
    let optimized = UniformSpline::load(dir.path().join("random_seed3_mma.spline")).unwrap();
    // Endpoint knots may move within the configured tolerance.
    let eps = ExperimentConfig::default().limits.eps;
    assert!((optimized.knots()[0] - spline.knots()[0]).abs().iter().zip(eps.iter()).all(|(d, e)| d <= e));
    assert!(dir.path().join("random_seed3_mma_log.csv").exists());

    let o = obscal(&["--out", &out, "simulate", &sp, "--quality", "40"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let series = read_run_series(dir.path().join("random_seed3_q40.csv")).unwrap();
    assert_eq!(series.len(), 51);
    assert_eq!(code(&obscal(&["--out", &out, "simulate", &sp, "--quality", "0"])), 2);
}

#[test]
fn describe_flags_hover_as_unobservable() {
    let dir = tempfile::tempdir().unwrap();
    let hover = UniformSpline::constant(Vector4::new(0.0, 0.0, 1.0, 0.0), 15, 6, 0.5, 0.0).unwrap();
    let path = dir.path().join("hover.spline");
    hover.save(&path).unwrap();
    let o = obscal(&["describe", &path.to_string_lossy()]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("trajectory rank")).unwrap();
    let unobservable: usize = line
        .split('(')
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|n| n.parse().ok())
        .unwrap();
    assert!(unobservable >= 3, "{line}");
}

#[test]
fn experiment_exit_codes_follow_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ok");
    let cfg = write_config(dir.path(), r#"{"n_trials": 1}"#);
    let o = obscal(&[
        "--config",
        &cfg,
        "--out",
        &out.to_string_lossy(),
        "experiment",
        "--method",
        "random",
        "--quality",
        "40",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("random"));
    assert!(out.join("summary_table.csv").exists());
    assert_eq!(fs::read_to_string(out.join("failures.json")).unwrap().trim(), "[]");

    let failing = write_config(dir.path(), r#"{"n_trials": 1, "limits": {"v_max": [0.001, 0.001, 0.001, 0.001]}}"#);
    let out = dir.path().join("failing");
    let o = obscal(&["--config", &failing, "--out", &out.to_string_lossy(), "experiment"]);
    assert_eq!(code(&o), 1);
    let manifest = fs::read_to_string(out.join("failures.json")).unwrap();
    assert!(manifest.contains("random_spline"));
}
