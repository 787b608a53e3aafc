use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn flowforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowforge"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn desk_file(id: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/datasets/desk").join(format!("{id}.json"))
}

fn run_desk(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", out.to_str().unwrap(), "--seed", "3"];
    args.extend_from_slice(extra);
    flowforge(&args)
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_desk(dir.path(), &["--instances", "data_sum_list,logic_grade"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let md = stdout(&o);
    assert!(md.contains("Total: 2 instances, 11 tests"), "{md}");
    assert!(md.contains("| ES-P&E | 100.0 | 100.0 |"), "{md}");

    let csv = flowforge(&["report", dir.path().to_str().unwrap(), "--format", "csv"]);
    assert_eq!(csv.status.code(), Some(0));
    let text = stdout(&csv);
    assert!(text.starts_with("mode,"), "{text}");
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn baseline_modes_run() {
    for mode in ["react", "plan-execute", "enhanced-react"] {
        let dir = tempfile::tempdir().unwrap();
        let o = run_desk(dir.path(), &["--mode", mode, "--instances", "math_linear_combo"]);
        assert_eq!(o.status.code(), Some(0), "{mode}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("Total: 1 instances"), "{mode}");
    }
}

#[test]
fn es_strategy_flags_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_desk(
        dir.path(),
        &[
            "--exec-strategy", "react", "--build-strategy", "react", "--rollouts", "2",
            "--selection", "random-success", "--jobs", "2", "--instances", "string_shout",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("| ES-ReAct |"));
}

#[test]
fn eval_rescores_edited_graph() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_desk(dir.path(), &["--instances", "data_sum_list"]).status.code(), Some(0));
    let graph = dir.path().join("cases/data_sum_list/graph.json");
    std::fs::write(&graph, std::fs::read_to_string(&graph).unwrap().replace("sum_list", "max_of")).unwrap();
    let o = flowforge(&["eval", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("| ES-P&E | 0.0 |"), "{}", stdout(&o));
}

#[test]
fn compare_prints_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_desk(dir.path(), &["--instances", "data_sum_list"]).status.code(), Some(0));
    let case = dir.path().join("cases/data_sum_list");
    let o = flowforge(&[
        "compare",
        desk_file("data_sum_list").to_str().unwrap(),
        case.join("graph.json").to_str().unwrap(),
        "--trace",
        case.join("rollout_0.trace.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(d["equivalence"], "Equivalent");
    assert_eq!(d["final_score"], 1.0);
}

#[test]
fn replay_shows_partitions() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_desk(dir.path(), &["--instances", "data_sum_list"]).status.code(), Some(0));
    let case = dir.path().join("cases/data_sum_list");
    let o = flowforge(&["replay", case.join("rollout_0.trace.jsonl").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("[0] B sum_list("), "{text}");
    assert!(text.contains("status: success"), "{text}");
    let build = flowforge(&["replay", case.join("build.trace.jsonl").to_str().unwrap()]);
    assert!(stdout(&build).contains(" G add_start_node("));
}

#[test]
fn config_and_schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    assert_eq!(flowforge(&["report", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run_desk(dir.path(), &["--rollouts", "0"]).status.code(), Some(2));
    assert_eq!(run_desk(dir.path(), &["--instances", "no_such_case"]).status.code(), Some(2));
    assert_eq!(run_desk(dir.path(), &["--mode", "bogus"]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"nodes\": 3}").unwrap();
    let o = flowforge(&["compare", bad.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&bad, "not a trace").unwrap();
    assert_eq!(flowforge(&["replay", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn transport_failures_exit_1() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("http://127.0.0.1:{port}/v1/chat/completions");
    let dir = tempfile::tempdir().unwrap();
    let o = run_desk(dir.path(), &["--endpoint", &endpoint, "--instances", "data_sum_list"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1 errors"));
}
