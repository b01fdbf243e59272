use std::path::Path;
use std::process::{Command, Output};

fn cascade_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade-lab"))
        .args(args)
        .env_remove("CASCADE_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn json_of(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn mean_report_has_schema_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mean.json");
    let o = cascade_lab(&[
        "--experiment", "mean", "--gamma", "0.7", "--beta", "0.3", "--depth", "6", "--trials", "2000", "--seed", "42",
        "--output", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json_of(&out);
    assert_eq!(v["experiment"], "mean");
    assert_eq!(v["params"]["gamma"], 0.7);
    assert_eq!(v["params"]["epsilon0"], 0.05);
    assert_eq!(v["seed"], 42);
    assert_eq!(v["trials"], 2000);
    assert_eq!(v["config"]["depth"], 6);
    assert!(v["rows"][0]["estimate"]["re"].is_f64());
    assert!(v.get("timestamp_unix").is_none());
    let meta = json_of(&dir.path().join("mean.json.meta.json"));
    assert!(meta["timestamp_unix"].is_u64());
}

#[test]
fn invalid_parameters_are_rejected() {
    assert_eq!(cascade_lab(&["--experiment", "mean", "--gamma", "-1"]).status.code(), Some(2));
    assert_eq!(cascade_lab(&["--experiment", "mean", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(cascade_lab(&["--experiment", "ballot", "--a", "3", "--b", "1"]).status.code(), Some(2));
}

#[test]
fn identities_pass_at_depth_twelve() {
    let o = cascade_lab(&["--experiment", "identities", "--depth", "12", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["summary"]["holds"], true);
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn breadth_capacity_is_a_resource_error() {
    let o = cascade_lab(&["--experiment", "mean", "--depth", "30", "--trials", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--mode stream"));
    let o = cascade_lab(&["--experiment", "mean", "--depth", "18", "--trials", "2", "--mode", "stream"]);
    assert!(o.status.success());
}

#[test]
fn reports_are_reproducible_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let p = dir.path().join(name);
        let o = cascade_lab(&[
            "--experiment", "tail_sup", "--depth", "6", "--trials", "300", "--seed", "5", "--threads", threads,
            "--output", p.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        std::fs::read(p).unwrap()
    };
    let a = run("a.json", "1");
    let b = run("b.json", "1");
    let c = run("c.json", "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn thread_count_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_cascade-lab"))
        .args(["--experiment", "criticality", "--trials", "1000"])
        .env("CASCADE_LAB_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_cascade-lab"))
        .args(["--experiment", "criticality", "--trials", "1000"])
        .env("CASCADE_LAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn csv_mirror() {
    let o = cascade_lab(&["--experiment", "barrier", "--depth", "6", "--trials", "200", "--format", "csv"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("label,x,l,n,estimate,std_error,bound_ratio,truncation,zero_count"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn off_boundary_tail_warns() {
    let o = cascade_lab(&["--experiment", "tail_sup", "--gamma", "0.3", "--beta", "0.3", "--depth", "4", "--trials", "100"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let o = cascade_lab(&["--experiment", "tail_sup", "--depth", "4", "--trials", "100"]);
    assert!(!String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn every_experiment_runs() {
    let cases: &[&[&str]] = &[
        &["--experiment", "criticality", "--trials", "1000"],
        &["--experiment", "fourth_moment", "--depth", "4", "--trials", "100", "--x-grid", "0,2"],
        &["--experiment", "modulus", "--depth", "8", "--trials", "10"],
        &["--experiment", "variation", "--depth", "6", "--trials", "50"],
        &["--experiment", "many_to_one", "--function", "exp_decay:1", "--n-grid", "1,4", "--trials", "1000"],
        &["--experiment", "ballot", "--n-grid", "1,16", "--b", "2", "--trials", "10000"],
        &["--experiment", "exp_sum", "--kappa", "0.4", "--x-grid", "1", "--trials", "500"],
    ];
    for args in cases {
        let o = cascade_lab(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(!v["rows"].as_array().unwrap().is_empty(), "{args:?}");
    }
}

#[test]
fn process_export() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("proc.csv");
    let o = cascade_lab(&["--experiment", "identities", "--depth", "5", "--trials", "2", "--export-process", p.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(&p).unwrap();
    assert_eq!(csv.lines().count(), 1 + 33);
    let summary = json_of(&dir.path().join("proc.csv.summary.json"));
    assert_eq!(summary["total_variation"].as_array().unwrap().len(), 6);
}
