use std::path::Path;
use std::process::{Command, Output};

fn plugvod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plugvod"))
        .args(args)
        .env_remove("PLUGVOD_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_owned)
        .collect()
}

#[test]
fn validate_bundled_and_reject_missing() {
    let ok = plugvod(&["validate", "--scenario", "static_sync"]);
    assert!(ok.status.success());
    assert!(stdout(&ok).contains("static_sync: ok"));

    let bad = plugvod(&["validate", "--scenario", "no_such_scenario"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));
}

#[test]
fn run_writes_metrics_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = plugvod(&[
        "run",
        "--scenario",
        "topology",
        "--seed",
        "3",
        "--out",
        out,
        "--horizon",
        "40",
        "--helpers",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("# plugvod metrics v1"));
    assert!(metrics.contains("# seed=3"));
    assert_eq!(data_rows(&dir.path().join("metrics.csv")).len(), 41);
    assert!(dir.path().join("summary.txt").exists());
    assert!(dir.path().join("helpers.csv").exists());
}

#[test]
fn out_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_plugvod"))
        .args(["run", "--scenario", "tiny_pair", "--horizon", "20"])
        .env("PLUGVOD_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("metrics.csv").exists());
}

#[test]
fn no_topology_update_means_no_chokes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = plugvod(&[
        "run",
        "--scenario",
        "topology",
        "--out",
        out,
        "--horizon",
        "60",
        "--no-topology-update",
    ]);
    assert!(o.status.success());
    for row in data_rows(&dir.path().join("metrics.csv")) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[9], "0", "chokes in {row}");
    }
}

#[test]
fn replications_get_their_own_directories() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = plugvod(&[
        "run",
        "--scenario",
        "churn",
        "--seed",
        "10",
        "--out",
        out,
        "--horizon",
        "30",
        "--replications",
        "3",
    ]);
    assert!(o.status.success());
    let texts: Vec<String> = (10..13)
        .map(|s| std::fs::read_to_string(dir.path().join(format!("seed-{s}/metrics.csv"))).unwrap())
        .collect();
    assert_ne!(texts[0], texts[1]);
    assert!(texts[2].contains("# seed=12"));
}

#[test]
fn compare_identical_runs_shows_no_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = plugvod(&[
            "run",
            "--scenario",
            "static_sync",
            "--out",
            d.to_str().unwrap(),
            "--horizon",
            "30",
        ]);
        assert!(o.status.success());
    }
    let o = plugvod(&[
        "compare",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("0.00%"), "{}", stdout(&o));
}

#[test]
fn compare_refuses_different_populations() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (d, scenario) in [(&a, "tiny_pair"), (&b, "tiny_mixed")] {
        let o = plugvod(&[
            "run",
            "--scenario",
            scenario,
            "--out",
            d.to_str().unwrap(),
            "--horizon",
            "20",
        ]);
        assert!(o.status.success());
    }
    let o = plugvod(&[
        "compare",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
}

#[test]
fn analyze_writes_stationary_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = plugvod(&[
        "analyze",
        "--scenario",
        "tiny_pair",
        "--seed",
        "1",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&dir.path().join("stationary.csv"));
    assert_eq!(rows.len(), 2);
    assert!(stdout(&o).contains("tv distance"));
}

#[test]
fn invalid_flags_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let horizon = plugvod(&[
        "run",
        "--scenario",
        "channel_switch",
        "--out",
        out,
        "--horizon",
        "100",
    ]);
    assert!(!horizon.status.success());
    let reps = plugvod(&[
        "run",
        "--scenario",
        "tiny_pair",
        "--out",
        out,
        "--replications",
        "0",
    ]);
    assert!(!reps.status.success());
    assert!(!dir.path().join("metrics.csv").exists());
}
