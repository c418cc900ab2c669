//! End-to-end checks of flag validation, exit codes, and output formats.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldp-telemetry"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_trace(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn gamma_out_of_range_exits_2() {
    let out = run(&[
        "simulate-mean",
        "--epsilon",
        "1",
        "--gamma",
        "0.6",
        "--n",
        "10",
        "--population",
        "constant:100",
        "--trials",
        "1",
        "--out",
        "/tmp/unused.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(
        msg.contains("gamma") && msg.contains("0.5"),
        "stderr: {msg}"
    );
}

#[test]
fn non_dividing_granularity_exits_2() {
    let out = run(&[
        "simulate-mean",
        "--epsilon",
        "1",
        "--n",
        "10",
        "--s",
        "7",
        "--m",
        "86400",
        "--population",
        "constant:100",
        "--out",
        "/tmp/unused.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("divide"), "stderr: {}", stderr(&out));
}

#[test]
fn oversized_d_exits_2() {
    let out = run(&[
        "simulate-hist",
        "--epsilon",
        "1",
        "--n",
        "10",
        "--k",
        "32",
        "--d",
        "64",
        "--population",
        "uniform:0:86400",
        "--out",
        "/tmp/unused.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("d <= k"), "stderr: {}", stderr(&out));
}

#[test]
fn synthetic_population_requires_n() {
    let out = run(&[
        "simulate-mean",
        "--epsilon",
        "1",
        "--population",
        "constant:100",
        "--out",
        "/tmp/unused.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--n"), "stderr: {}", stderr(&out));
}

#[test]
fn unknown_population_kind_exits_2() {
    let out = run(&[
        "simulate-mean",
        "--epsilon",
        "1",
        "--n",
        "5",
        "--population",
        "zipf:2",
        "--out",
        "/tmp/unused.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not recognized"));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate-mean",
        "--epsilon",
        "1",
        "--n",
        "10",
        "--population",
        "constant:100",
        "--trials",
        "1",
        "--out",
        dir.path().join("missing/sub/dir/r.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_mean_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("r.csv");
    let json_path = dir.path().join("r.json");
    let out = run(&[
        "simulate-mean",
        "--epsilon",
        "0.5,1",
        "--n",
        "500",
        "--population",
        "constant:43200",
        "--trials",
        "4",
        "--seed",
        "7",
        "--baseline",
        "laplace",
        "--out",
        csv_path.to_str().unwrap(),
        "--json",
        json_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let csv = fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# config: simulate-mean"));
    assert!(lines[0].contains("--seed 7"));
    assert_eq!(
        lines[1],
        "mechanism,epsilon,gamma,n,d_or_s,trials,mean_error,std_error"
    );
    // One one-bit row plus one baseline row per epsilon.
    assert_eq!(lines.len(), 2 + 4);
    assert!(lines[2].starts_with("one-bit-rrpm,0.5,"));
    assert!(lines[3].starts_with("laplace,0.5,"));

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["per_trial_errors"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_hist_sweeps_epsilon_and_d() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("h.csv");
    let out = run(&[
        "simulate-hist",
        "--epsilon",
        "1",
        "--k",
        "32",
        "--d",
        "1,4",
        "--n",
        "400",
        "--population",
        "uniform:0:86400",
        "--trials",
        "3",
        "--seed",
        "5",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let csv = fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2 + 2);
    assert!(lines[2].starts_with("d-bit-flip-pm,1,0,400,1,3,"));
    assert!(lines[3].starts_with("d-bit-flip-pm,1,0,400,4,3,"));
}

#[test]
fn patterns_on_a_constant_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut trace = String::from("user_id,t,value_seconds\n");
    for user in 0..9 {
        for round in 1..=3 {
            trace.push_str(&format!("u{user},{round},40000\n"));
        }
    }
    let trace_path = write_trace(dir.path(), "t.csv", &trace);
    let out_path = dir.path().join("p.csv");
    let out = run(&[
        "patterns",
        "--trace",
        &trace_path,
        "--seed",
        "3",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let csv = fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], "pattern_rank,support,cumulative_user_fraction");
    // Constant values round to one grid point per user at s = m, so a
    // single pattern holds all nine users.
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2], "1,9,1.000000");
}

#[test]
fn patterns_supports_sum_to_n() {
    let dir = tempfile::tempdir().unwrap();
    let mut trace = String::from("user_id,t,value_seconds\n");
    for user in 0..20u64 {
        for round in 1..=4u64 {
            let v = (user * 13_577 + round * 9_973) % 86_401;
            trace.push_str(&format!("u{user},{round},{v}\n"));
        }
    }
    let trace_path = write_trace(dir.path(), "t.csv", &trace);
    let out_path = dir.path().join("p.csv");
    let out = run(&[
        "patterns",
        "--trace",
        &trace_path,
        "--s",
        "21600",
        "--seed",
        "11",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let csv = fs::read_to_string(&out_path).unwrap();
    let total: u64 = csv
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 20);
}

#[test]
fn malformed_trace_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = write_trace(
        dir.path(),
        "bad.csv",
        "user_id,t,value_seconds\nalice,1,100\nbogus-row\n",
    );
    let out = run(&[
        "patterns",
        "--trace",
        &trace_path,
        "--out",
        dir.path().join("p.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "stderr: {}", stderr(&out));
}

#[test]
fn missing_trace_file_exits_1() {
    let out = run(&[
        "patterns",
        "--trace",
        "/nonexistent/trace.csv",
        "--out",
        "/tmp/unused.csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn accounting_prints_reference_values() {
    let out = run(&["accounting", "--epsilon", "0.686,1", "--gamma", "0,0.2"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0.686,0,0.6860,1.6718"), "stdout: {stdout}");
    assert!(stdout.contains("1,0,1.0000,2.7183"));
    assert!(stdout.contains("1,0.2,0.5694,"));
}
