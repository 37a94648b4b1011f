use std::path::Path;
use std::process::{Command, Output};

fn qic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qic")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_traces_writes_one_csv_per_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = qic(&["generate-traces", "--seed", "4", "--out", path(dir.path())]);
    assert!(out.status.success());
    for id in ["trace_m1", "trace_m2", "trace_m3"] {
        let text = std::fs::read_to_string(dir.path().join(format!("{id}.csv"))).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t_s,mcs,throughput_bps");
        assert!(text.lines().count() > 1000);
    }
}

#[test]
fn dump_catalog_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("catalog.json");
    assert!(qic(&["dump-catalog", "--out", path(&f)]).status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(f).unwrap()).unwrap();
    assert_eq!(v["branches"].as_array().unwrap().len(), 18);
    assert_eq!(v["stems"].as_array().unwrap().len(), 4);
}

#[test]
fn run_small_then_summarize_reproduces_summary() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/small_scale.json");
    let out = qic(&[
        "run-small", "--config", config, "--out", path(&run), "--slots", "3", "--epochs", "5",
        "--mctp-iterations", "200", "--sweep", "latency", "--values", "0.04,0.05",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let listed = String::from_utf8(out.stdout).unwrap();
    assert!(listed.contains("fig4_latency_night.csv"));
    let runs = std::fs::read_to_string(run.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 2 * 3 * 3 * 3);

    let again = dir.path().join("again");
    let out = qic(&["summarize", "--config", config, "--runs", path(&run.join("runs.csv")), "--out", path(&again)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["summary.csv", "fig4_latency_sunny.csv", "fig4_latency_motorway.csv"] {
        assert_eq!(std::fs::read(run.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn run_large_emits_fig5_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = qic(&[
        "run-large", "--n-mobile", "1,2", "--duration", "3", "--solvers", "qic,mctp,opt", "--epochs", "2",
        "--mctp-iterations", "20", "--out", path(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let churn = std::fs::read_to_string(dir.path().join("fig5_churn.csv")).unwrap();
    let lines: Vec<&str> = churn.lines().collect();
    assert_eq!(lines[0], "x,qic,mctp");
    assert_eq!(lines.len(), 3);
}

#[test]
fn dump_graph_is_dot() {
    let out = qic(&["dump-graph", "--t", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("digraph"));
    assert!(text.contains("S_v") && text.contains("D_v"));
}

#[test]
fn failures_print_a_json_error_line() {
    let out = qic(&["run-small", "--config", "/nonexistent/scenario.json"]);
    assert!(!out.status.success());
    let line: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(line["kind"], "io");
    assert!(line["message"].as_str().unwrap().contains("nonexistent"));

    let out = qic(&["run-small", "--sweep", "bogus"]);
    let line: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(line["kind"], "unknown_id");
}
