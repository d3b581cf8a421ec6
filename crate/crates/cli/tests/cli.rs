use std::process::{Command, Output};

use serde_json::Value;

fn infrasim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infrasim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn exit_codes() {
    assert_eq!(infrasim(&["--help"]).status.code(), Some(0));
    assert_eq!(infrasim(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(infrasim(&[]).status.code(), Some(1));
    let o = infrasim(&["simulate", "--scenario", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("simple5"));
    assert_eq!(infrasim(&["simulate", "--scenario", "simple5", "--policy", "rb:tau=0"]).status.code(), Some(2));
}

#[test]
fn generate_round_trips_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cyclic.json");
    let o = infrasim(&["generate", "cyclic", "--seed", "4", "--out", file.to_str().unwrap()]);
    assert!(o.status.success());
    let fp = stdout(&o).split_whitespace().nth(1).unwrap().to_string();

    let by_name = infrasim(&["simulate", "--scenario", "cyclic", "--seed", "4"]);
    let by_file = infrasim(&["simulate", "--scenario", file.to_str().unwrap(), "--seed", "4"]);
    assert!(by_name.status.success() && by_file.status.success());
    assert_eq!(by_name.stdout, by_file.stdout);
    let header: Value = serde_json::from_str(stdout(&by_file).lines().next().unwrap()).unwrap();
    assert_eq!(header["fingerprint"], fp.as_str());
}

#[test]
fn ingest_bundled_sample() {
    let o = infrasim(&["ingest"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["components"].as_array().unwrap().len(), 2118);
}

#[test]
fn ingest_reports_bad_row() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.csv");
    std::fs::write(&net, "version,1\nV,0,0,0\nV,1,1,0\nE,0,0,1,x,40,1\n").unwrap();
    let o = infrasim(&["ingest", net.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains('4'));
}

#[test]
fn simulate_writes_log_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.jsonl");
    let summary = dir.path().join("summary.json");
    let o = infrasim(&[
        "simulate", "--scenario", "simple5", "--policy", "greedy:cap=2", "--seed", "9",
        "--out", log.to_str().unwrap(), "--summary", summary.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let s: Value = serde_json::from_slice(&std::fs::read(&summary).unwrap()).unwrap();
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s, printed);
    let lines = std::fs::read_to_string(&log).unwrap();
    let n_steps = lines.lines().filter(|l| l.contains("\"kind\":\"step\"")).count();
    assert_eq!(s["summary"]["episode_length"].as_u64().unwrap() as usize, n_steps);

    let r = infrasim(&["replay", log.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", stdout(&r));
}

#[test]
fn replay_detects_changed_reward() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("run.jsonl");
    assert!(infrasim(&["simulate", "--scenario", "catastrophic", "--seed", "2", "--out", log.to_str().unwrap()])
        .status
        .success());
    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    lines[5]["reward"] = Value::from(lines[5]["reward"].as_f64().unwrap() + 1e-9);
    let out: String = lines.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(&log, out).unwrap();
    let r = infrasim(&["replay", log.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn benchmark_formats() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("runs.csv");
    let o = infrasim(&[
        "benchmark", "--scenario", "simple5", "--policy", "rb:tau=5,theta=55", "--runs", "3",
        "--format", "csv", "--csv", csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let printed = stdout(&o);
    assert!(printed.starts_with("run,seed,ettf,"));
    assert_eq!(printed, std::fs::read_to_string(&csv).unwrap());
    assert_eq!(printed.lines().count(), 4);

    let t = infrasim(&["benchmark", "--scenario", "simple5", "--runs", "2"]);
    assert!(t.status.success());
    assert!(stdout(&t).contains("ettf"));
}
