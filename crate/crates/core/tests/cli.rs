use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qboost::config::ExperimentConfig;
use qboost::qubo::QuboProblem;
use serde_json::Value;

/// Desk roster and code, but only a few epochs and samples.
fn tiny_config(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::desk();
    cfg.data.n_per_time = 20;
    cfg.train.max_epochs = 15;
    cfg.train.batch_interior = 8;
    cfg.train.batch_boundary = 4;
    cfg.train.batch_initial = 4;
    cfg.solver.sa.num_reads = 10;
    cfg.solver.sa.sweeps = 100;
    cfg.sweeps.precision = vec![2, 3];
    cfg.report.curve_points = 11;
    cfg.output_dir = dir.join("out");
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn qboost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qboost")).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) {
    let out = qboost(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap_or("")
        .to_string()
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    run_ok(&["pipeline", "--config", cfg.to_str().unwrap()]);
    let out = dir.path().join("out");

    let headers = [
        ("dataset.csv", "split,t,x,u"),
        ("training_report.csv", "learner,epoch,G"),
        ("fig1_curves.csv", "t,x,u_analytic,u_ensemble,method"),
        ("fig2_levels.csv", "R,level,energy,train_mse,test_mse"),
        ("table2.csv", "R,method,train_mse,test_mse,seconds"),
        ("fig3_lambda.csv", "lambda,mse"),
    ];
    for (file, want) in headers {
        let path = out.join(file);
        assert_eq!(header(&path), want, "{file}");
        assert!(!fs::read(&path).unwrap().contains(&b'\r'), "{file} has CR line endings");
    }
    let report = fs::read_to_string(out.join("training_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 4 * 15);
    assert_eq!(
        fs::read_to_string(out.join("fig2_levels.csv")).unwrap().lines().count(),
        1 + 11
    );

    let model: Value = serde_json::from_str(&fs::read_to_string(out.join("models/learner_0.json")).unwrap()).unwrap();
    for key in ["layer_sizes", "activation", "weights", "biases"] {
        assert!(model.get(key).is_some(), "model JSON lacks {key}");
    }

    let q = QuboProblem::from_json(&fs::read_to_string(out.join("qubo.json")).unwrap()).unwrap();
    assert_eq!(q.n_vars, 12);
    assert_eq!(q.meta.learner_order.len(), 4);
    let raw: Value = serde_json::from_str(&fs::read_to_string(out.join("qubo.json")).unwrap()).unwrap();
    assert_eq!(raw["code"]["R"], 4);
    assert_eq!(raw["meta"]["K"], 4);

    let sol: Value = serde_json::from_str(&fs::read_to_string(out.join("solutions.json")).unwrap()).unwrap();
    let w: Vec<f64> = serde_json::from_value(sol["best"]["weights"].clone()).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let cfg = tiny_config(d.path());
        run_ok(&["pipeline", "--config", cfg.to_str().unwrap()]);
    }
    for file in [
        "dataset.csv",
        "training_report.csv",
        "qubo.json",
        "solutions.json",
        "table2.csv",
        "fig3_lambda.csv",
    ] {
        let x = fs::read(a.path().join("out").join(file)).unwrap();
        let y = fs::read(b.path().join("out").join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }
}

#[test]
fn stages_run_in_isolation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");

    run_ok(&["gen-data", "--config", cfg]);
    assert!(out.join("dataset.csv").exists());
    assert!(!out.join("models").exists());

    // Missing upstream artifacts are a stage failure.
    assert_eq!(qboost(&["build-qubo", "--config", cfg]).status.code(), Some(3));

    run_ok(&["pipeline", "--config", cfg, "--stage", "build-qubo"]);
    assert!(out.join("qubo.json").exists());
    assert!(!out.join("solutions.json").exists());

    run_ok(&[
        "solve", "--config", cfg, "--method", "sa", "--reads", "5", "--sweeps", "50", "--seed", "7",
    ]);
    let first = fs::read(out.join("solutions.json")).unwrap();
    let sol: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(sol["method"], "sa");
    assert_eq!(sol["samples"].as_array().unwrap().len(), 5);
    run_ok(&[
        "solve", "--config", cfg, "--method", "sa", "--reads", "5", "--sweeps", "50", "--seed", "7",
    ]);
    assert_eq!(first, fs::read(out.join("solutions.json")).unwrap());

    run_ok(&["solve", "--config", cfg, "--method", "exact", "--levels", "3"]);
    let sol: Value = serde_json::from_str(&fs::read_to_string(out.join("solutions.json")).unwrap()).unwrap();
    let levels: Vec<u64> = sol["samples"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["level"].as_u64().unwrap())
        .collect();
    assert_eq!(*levels.last().unwrap(), 2);

    run_ok(&["evaluate", "--config", cfg]);
    assert!(out.join("fig1_curves.csv").exists());
    assert!(!out.join("table2.csv").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"lambda": -1.0}"#).unwrap();
    assert_eq!(
        qboost(&["gen-data", "--config", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );
    fs::write(&bad, "not json").unwrap();
    assert_eq!(
        qboost(&["gen-data", "--config", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );
    let missing = dir.path().join("missing.json");
    assert_eq!(
        qboost(&["train", "--config", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert_eq!(qboost(&["pipeline", "--stage", "bogus"]).status.code(), Some(2));
    assert_eq!(qboost(&["pipeline", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(qboost(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn shipped_presets_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    assert_eq!(
        ExperimentConfig::load(&root.join("desk.json")).unwrap(),
        ExperimentConfig::desk()
    );
    assert_eq!(
        ExperimentConfig::load(&root.join("paper.json")).unwrap(),
        ExperimentConfig::paper()
    );
}
