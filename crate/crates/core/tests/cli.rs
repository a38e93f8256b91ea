//! End-to-end binary tests: exit codes, output formats, and failure modes.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gemmas"))
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("spawn gemmas")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

const CYCLIC: &str = r#"{
  "method": "m", "model": "m", "benchmark": "b", "answer_kind": "numeric",
  "traces": [{
    "problem_id": "p", "question": "q", "gold_answer": "1",
    "nodes": [
      {"id": 0, "role": "a", "prompt": "", "response": "1", "prompt_tokens": 1, "completion_tokens": 1, "is_final": false},
      {"id": 1, "role": "b", "prompt": "", "response": "1", "prompt_tokens": 1, "completion_tokens": 1, "is_final": true}
    ],
    "spatial": [[0,1],[1,0]],
    "temporal": [[0,0],[0,0]]
  }]
}"#;

fn generate_run(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name);
    let mut args = vec!["generate", "--output", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let output = run(&args);
    assert_eq!(code(&output), 0, "generate failed: {}", String::from_utf8_lossy(&output.stderr));
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let valid = generate_run(dir.path(), "valid.json", &[]);
    let output = run(&["validate", &valid]);
    assert_eq!(code(&output), 0);
    assert!(stdout_of(&output).contains("ok"));

    let cyclic = dir.path().join("cyclic.json");
    fs::write(&cyclic, CYCLIC).unwrap();
    let output = run(&["validate", cyclic.to_str().unwrap()]);
    assert_eq!(code(&output), 1);
    let text = stdout_of(&output);
    assert!(text.contains("invalid"));
    assert!(text.contains("cycle in union graph: 0 -> 1 -> 0"), "got: {text}");

    let output = run(&["validate", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&output), 2);

    // One bad file poisons a multi-file invocation.
    let output = run(&["validate", &valid, cyclic.to_str().unwrap()]);
    assert_eq!(code(&output), 1);
}

#[test]
fn analyze_formats_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate_run(dir.path(), "run.json", &["--seed", "5"]);

    let markdown = run(&["analyze", &path]);
    assert_eq!(code(&markdown), 0);
    assert!(stdout_of(&markdown).contains("| Method | Model | Accuracy | Ptok | Ctok | IDS | UPR |"));

    let out_file = dir.path().join("table.csv");
    let to_file = run(&["analyze", &path, "--format", "csv", "--output", out_file.to_str().unwrap()]);
    assert_eq!(code(&to_file), 0);
    let written = fs::read_to_string(&out_file).unwrap();
    assert!(written.starts_with("benchmark,model,method,accuracy,"));
    assert_eq!(written.lines().count(), 2);

    // Token scale rescales the ptok/ctok columns.
    let ptok_at = |scale: &str| -> f64 {
        let csv = stdout_of(&run(&["analyze", &path, "--format", "csv", "--raw", "--token-scale", scale]));
        csv.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap()
    };
    assert!((ptok_at("1") / ptok_at("1000") - 1000.0).abs() < 1e-6);
}

#[test]
fn analyze_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let empty_traces = dir.path().join("empty.json");
    fs::write(
        &empty_traces,
        r#"{"method":"m","model":"m","benchmark":"b","answer_kind":"numeric","traces":[]}"#,
    )
    .unwrap();
    let output = run(&["analyze", empty_traces.to_str().unwrap()]);
    assert_eq!(code(&output), 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("traces"));

    let output = run(&["analyze", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(code(&output), 2);

    let output = run(&["analyze"]);
    assert_eq!(code(&output), 2);
}

#[test]
fn analyze_merges_multiple_runs_into_one_table() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate_run(dir.path(), "a.json", &["--seed", "1", "--method", "baseline"]);
    let b = generate_run(dir.path(), "b.json", &["--seed", "2", "--method", "tuned"]);
    let output = run(&["analyze", &a, &b, "--format", "csv"]);
    assert_eq!(code(&output), 0);
    let text = stdout_of(&output);
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("baseline"));
    assert!(text.contains("tuned"));

    // Same key twice is a data error.
    let duplicate = run(&["analyze", &a, &a]);
    assert_eq!(code(&duplicate), 1);
    assert!(String::from_utf8_lossy(&duplicate.stderr).contains("duplicate"));
}

#[test]
fn sweep_grid_rows_and_consistency() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate_run(dir.path(), "run.json", &["--seed", "9"]);

    let output = run(&["sweep", &path, "--grid", "0:1:0.5"]);
    assert_eq!(code(&output), 0);
    let text = stdout_of(&output);
    let lines: Vec<&str> = text.trim_end().lines().collect();
    assert_eq!(lines[0], "lambda1,mean_ids");
    assert_eq!(lines.len(), 4, "header plus three grid rows: {text}");

    // Default grid spans eleven points.
    let full = stdout_of(&run(&["sweep", &path]));
    assert_eq!(full.trim_end().lines().count(), 12);

    // The 0.5 sweep point equals the analyze table's diversity column, to
    // the last bit (both printed raw).
    let single = stdout_of(&run(&["sweep", &path, "--grid", "0.5:0.5:1", "--raw"]));
    let sweep_ids = single.trim_end().lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
    let csv = stdout_of(&run(&["analyze", &path, "--format", "csv", "--raw"]));
    let analyze_ids = csv.lines().nth(1).unwrap().split(',').nth(6).unwrap().to_string();
    assert_eq!(sweep_ids, analyze_ids);

    let bad = run(&["sweep", &path, "--grid", "0:2:1"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn remote_without_url_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate_run(dir.path(), "run.json", &[]);
    let output = binary()
        .args(["analyze", &path, "--provider", "remote"])
        .env_remove("GEMMAS_EMBED_URL")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("GEMMAS_EMBED_URL"));
}

#[test]
fn generate_determinism_and_degenerate_settings() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate_run(dir.path(), "a.json", &["--seed", "4"]);
    let b = generate_run(dir.path(), "b.json", &["--seed", "4"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let all_correct = generate_run(dir.path(), "c.json", &["--correctness", "1.0", "--seed", "6"]);
    let csv = stdout_of(&run(&["analyze", &all_correct, "--format", "csv"]));
    let row = csv.lines().nth(1).unwrap();
    assert!(row.contains(",1.0000,"), "accuracy column should be 1.0: {row}");

    // No edges: diversity and path-ratio columns stay empty.
    let disconnected =
        generate_run(dir.path(), "d.json", &["--edge-density", "0.0", "--seed", "6"]);
    let csv = stdout_of(&run(&["analyze", &disconnected, "--format", "csv"]));
    let fields: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[6], "", "ids column: {csv}");
    assert_eq!(fields[7], "", "upr column: {csv}");

    let invalid = run(&["generate", "--agents", "1"]);
    assert_eq!(code(&invalid), 2);
}

#[test]
fn compare_identical_inputs_and_zero_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let row = dir.path().join("row.csv");
    fs::write(&row, "accuracy,ptok,ctok,ids,upr\n0.5,1.25,0.75,0.4,0.2\n").unwrap();
    let output = run(&[
        "compare",
        row.to_str().unwrap(),
        row.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(code(&output), 0);
    for line in stdout_of(&output).lines().skip(1) {
        let delta: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(delta, 0.0, "line {line}");
    }

    let zero = dir.path().join("zero.csv");
    fs::write(&zero, "accuracy,ptok,ctok,ids,upr\n0.0,0.0,0.0,,\n").unwrap();
    let output = run(&["compare", zero.to_str().unwrap(), row.to_str().unwrap()]);
    assert_eq!(code(&output), 0);
    let text = stdout_of(&output);
    assert!(text.contains("n/a"), "zero baseline must render n/a: {text}");
}

#[test]
fn compare_accepts_trace_files() {
    let dir = tempfile::tempdir().unwrap();
    let baseline = generate_run(dir.path(), "base.json", &["--seed", "10"]);
    let candidate = generate_run(dir.path(), "cand.json", &["--seed", "11", "--method", "other"]);
    let output = run(&["compare", &baseline, &candidate]);
    assert_eq!(code(&output), 0);
    assert!(stdout_of(&output).contains("| accuracy |"));

    let two_rows = dir.path().join("two.csv");
    fs::write(
        &two_rows,
        "accuracy,ptok,ctok,ids,upr\n0.5,1.0,0.5,0.4,0.2\n0.6,1.0,0.5,0.4,0.2\n",
    )
    .unwrap();
    let output = run(&["compare", two_rows.to_str().unwrap(), &baseline]);
    assert_eq!(code(&output), 1);
}

#[test]
fn remote_failure_aborts_and_keep_partial_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate_run(dir.path(), "run.json", &["--problems", "3", "--seed", "3"]);

    // A port with nothing listening: connect is refused immediately.
    let refused = {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        format!("http://{addr}/embed")
    };

    let plain = run(&["analyze", &path, "--provider", "remote", "--remote-url", &refused]);
    assert_eq!(code(&plain), 1);
    assert!(String::from_utf8_lossy(&plain.stderr).contains("unavailable"));

    let out = dir.path().join("table.md");
    let kept = run(&[
        "analyze",
        &path,
        "--provider",
        "remote",
        "--remote-url",
        &refused,
        "--keep-partial",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&kept), 1);
    let partial = dir.path().join("table.md.partial.json");
    let body = fs::read_to_string(&partial).expect("partial results file");
    assert!(body.contains("\"accuracy\""));
    assert!(body.contains("\"failed_traces\": 3"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&["analyze", "x.json", "--nonsense"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
}
