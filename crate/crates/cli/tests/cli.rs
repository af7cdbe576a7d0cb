use std::path::Path;
use std::process::{Command, Output};

use metaiot::pipeline::DEFAULT_CONFIG;

fn small_config(dir: &Path) -> std::path::PathBuf {
    let text = DEFAULT_CONFIG
        .replace("count = [9, 9]", "count = [3, 3]")
        .replace("n_f = 32", "n_f = 8")
        .replace("budget = 80", "budget = 30")
        .replace("epochs = 300", "epochs = 20")
        .replace(
            "distance_m = [1.0, 1.25, 1.5, 2.0, 2.5, 3.0]",
            "distance_m = [1.0, 2.0]",
        )
        .replace(
            "power_w = [0.001, 0.002, 0.005, 0.01, 0.03, 0.1]",
            "power_w = [0.01, 0.1]",
        );
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn metaiot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metaiot")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn codesign_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let o = metaiot(&[
        "codesign",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "manifest.json",
        "model.json",
        "dataset.csv",
        "test_dataset.csv",
        "trace.csv",
        "structures.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(stdout(&o).contains("d* = ["));
}

#[test]
fn protocol_phases_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = metaiot(&["gen-dataset", "--config", cfg, "--out", out, "--d", "2,3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = dir.path().join("dataset.csv");
    let model = dir.path().join("model.json");
    let o = metaiot(&[
        "train",
        "--config",
        cfg,
        "--out",
        out,
        "--dataset",
        ds.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = metaiot(&[
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--dataset",
        ds.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let cli_rmse: f64 = stdout(&o).trim().parse().unwrap();
    let lib_rmse = metaiot::pipeline::evaluate(&model, &ds).unwrap();
    assert!((cli_rmse - lib_rmse).abs() < 1e-11);

    let first = std::fs::read_to_string(&ds).unwrap();
    let p_line = first.lines().nth(1).unwrap();
    let p: Vec<&str> = p_line.split(',').skip(3).collect();
    let o = metaiot(&[
        "infer",
        "--config",
        cfg,
        "--model",
        model.to_str().unwrap(),
        "--p",
        &p.join(","),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("temperature = ") && s.contains("degC"), "{s}");
}

#[test]
fn sweep_writes_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().to_str().unwrap();
    let o = metaiot(&[
        "sweep",
        "--axis",
        "power",
        "--plot",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep_P_watt.csv")).unwrap();
    assert!(csv.starts_with("P_watt,case,rmse\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(dir.path().join("sweep_P_watt.gp").exists());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        metaiot(&["codesign", "--config", "/nonexistent.toml"]).status.code(),
        Some(2)
    );
    assert_eq!(
        metaiot(&["codesign", "--config", cfg, "--mode", "fuzzy"]).status.code(),
        Some(2)
    );
    assert_eq!(
        metaiot(&["gen-dataset", "--config", cfg, "--out", out, "--d", "2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        metaiot(&["sweep", "--config", cfg, "--out", out, "--axis", "time"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn numerical_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("distance_m = [1.0, 2.0]", "distance_m = [0.2, 1.0]");
    std::fs::write(&cfg, text).unwrap();
    let o = metaiot(&[
        "sweep",
        "--axis",
        "distance",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta_ms"));
}
