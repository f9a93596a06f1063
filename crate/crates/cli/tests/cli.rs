//! End-to-end checks of the binary: formats, determinism, and exit codes.

use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rllfbc"));
    cmd.env_remove("RLLFBC_SEED");
    cmd
}

fn stdout_lines(out: &Output) -> Vec<String> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|s| s.to_string())
        .collect()
}

fn parse_csv_row(line: &str) -> Vec<f64> {
    line.split(',').map(|f| f.parse().unwrap()).collect()
}

#[test]
fn capacity_single_row() {
    let out = bin().args(["capacity", "--eps", "0"]).output().unwrap();
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    assert_eq!(lines[0], "epsilon,p_star,capacity,capacity_alt,noncausal_max");
    let row = parse_csv_row(&lines[1]);
    assert!((row[2] - 0.6942419136306173).abs() < 1e-9);
    assert!((row[3] - row[2]).abs() <= 1e-9);
    assert!((row[4] - row[2]).abs() <= 1e-9);
}

#[test]
fn capacity_sweep_is_monotone() {
    let out = bin().args(["capacity", "--sweep", "0:1:0.01"]).output().unwrap();
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 102, "header plus 101 rows");
    let mut prev = f64::INFINITY;
    for line in &lines[1..] {
        let row = parse_csv_row(line);
        assert!(row[2] < prev, "capacity not strictly decreasing at eps {}", row[0]);
        assert!((row[3] - row[2]).abs() <= 1e-9);
        assert!((row[4] - row[2]).abs() <= 1e-9);
        prev = row[2];
    }
    let last = parse_csv_row(lines.last().unwrap());
    assert_eq!(last[0], 1.0);
    assert_eq!(last[2], 0.0);
}

#[test]
fn capacity_rejects_bad_arguments() {
    let out = bin().args(["capacity", "--eps", "1.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["capacity"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin()
        .args(["capacity", "--eps", "0.5", "--sweep", "0:1:0.1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["capacity", "--sweep", "0:1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn value_iter_writes_curves_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("vf.csv");
    let out = bin()
        .args(["value-iter", "--eps", "0.5", "--grid", "50", "--iters", "3"])
        .args(["--out", csv_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "z,h,delta_star");
    assert_eq!(lines.count(), 50);

    let summary: serde_json::Value = serde_json::from_str(&stdout_lines(&out)[0]).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["grid_size"], 50);
    assert!(summary["rho_estimate"].as_f64().unwrap().is_finite());
    assert!((summary["capacity"].as_f64().unwrap() - 0.4056852313758246).abs() < 1e-12);
}

#[test]
fn value_iter_rejects_degenerate_grid() {
    let out = bin()
        .args(["value-iter", "--eps", "0.5", "--grid", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dp_sim_histogram_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let hist_path = dir.path().join("hist.csv");
    let out = bin()
        .args(["dp-sim", "--eps", "0.5", "--steps", "20000", "--seed", "3"])
        .args(["--hist-out", hist_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let hist = std::fs::read_to_string(&hist_path).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next().unwrap(), "state,count");
    assert_eq!(lines.count(), 3, "three-state orbit");

    let summary: serde_json::Value = serde_json::from_str(&stdout_lines(&out)[0]).unwrap();
    assert_eq!(summary["histogram_support"].as_array().unwrap().len(), 3);
    assert!((summary["average_reward"].as_f64().unwrap() - 0.4056).abs() < 0.02);
}

#[test]
fn dp_sim_dead_channel_earns_nothing() {
    let out = bin()
        .args(["dp-sim", "--eps", "1", "--steps", "1000", "--seed", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    // histogram CSV and summary share stdout; the summary is the last line
    let lines = stdout_lines(&out);
    let summary: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
    assert_eq!(summary["average_reward"].as_f64().unwrap(), 0.0);
}

#[test]
fn transmit_reports_trials_and_aggregate() {
    let out = bin()
        .args(["transmit", "--eps", "0.5", "--msg-bits", "64", "--lambda", "4"])
        .args(["--seed", "7", "--trials", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 4, "three trials plus the aggregate");
    for line in &lines[..3] {
        let trial: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(trial["decoded_ok"], true);
        assert_eq!(trial["nR"], 64);
        assert!(trial["ratio"].as_f64().unwrap() > 0.0);
    }
    let aggregate: serde_json::Value = serde_json::from_str(&lines[3]).unwrap();
    assert_eq!(aggregate["errors"], 0);
    assert_eq!(aggregate["trials"], 3);
}

#[test]
fn transmit_is_deterministic_and_seedable_from_the_environment() {
    let run = |seed_args: &[&str], env_seed: Option<&str>| {
        let mut cmd = bin();
        cmd.args(["transmit", "--eps", "0.3", "--msg-bits", "32", "--lambda", "3"])
            .args(seed_args);
        if let Some(seed) = env_seed {
            cmd.env("RLLFBC_SEED", seed);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run(&["--seed", "9"], None), run(&["--seed", "9"], None));
    assert_ne!(run(&["--seed", "9"], None), run(&["--seed", "10"], None));
    // environment default, overridden by the flag
    assert_eq!(run(&[], Some("9")), run(&["--seed", "9"], None));
    assert_ne!(run(&[], Some("11")), run(&[], Some("12")));
}

#[test]
fn transmit_transcript_rows_have_the_fixed_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transcript.jsonl");
    let out = bin()
        .args(["transmit", "--eps", "0.5", "--msg-bits", "16", "--lambda", "2"])
        .args(["--seed", "5", "--transcript", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let body = std::fs::read_to_string(&path).unwrap();
    let mut t = 0u64;
    for line in body.lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(row["t"].as_u64().unwrap(), t);
        for key in ["x", "y", "theta", "phase", "set_size"] {
            assert!(row.get(key).is_some(), "missing key {key}");
        }
        t += 1;
    }
    assert!(t > 0);
}

#[test]
fn transmit_rejects_lambda_below_the_floor() {
    let out = bin()
        .args(["transmit", "--eps", "0.5", "--msg-bits", "32", "--lambda", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("at least 2"), "{stderr}");
}

#[test]
fn transmit_exhaustion_exits_with_code_three() {
    let out = bin()
        .args(["transmit", "--eps", "1", "--msg-bits", "8", "--lambda", "2", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}
