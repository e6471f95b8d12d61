//! End-to-end runs of the `egx` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/motivating.json")
}

fn egx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egx"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

#[test]
fn greedy_extraction_reports_17() {
    let input = fixture_path();
    let out = egx(&[
        "extract",
        "--input",
        input.to_str().unwrap(),
        "--mode",
        "greedy",
    ]);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(json["dag_cost"], 17);
    assert_eq!(json["valid"], true);
    assert_eq!(json["choices"]["c2"], "E2");
}

#[test]
fn hybrid_extraction_reports_16() {
    let input = fixture_path();
    let out = egx(&[
        "extract",
        "--input",
        input.to_str().unwrap(),
        "--mode",
        "hybrid",
        "--theta",
        "1.25",
    ]);
    assert_eq!(code(&out), 0);
    let json: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(json["dag_cost"], 16);
    assert_eq!(json["choices"]["c2"], "E3");
}

#[test]
fn degenerate_parallel_output_matches_greedy() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture_path();
    let greedy_out = dir.path().join("greedy.json");
    let parallel_out = dir.path().join("parallel.json");
    let out = egx(&[
        "extract",
        "--input",
        input.to_str().unwrap(),
        "--mode",
        "greedy",
        "--output",
        greedy_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let out = egx(&[
        "extract",
        "--input",
        input.to_str().unwrap(),
        "--mode",
        "parallel",
        "--workers",
        "1",
        "--batch-size",
        "1",
        "--output",
        parallel_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read(&greedy_out).unwrap(),
        std::fs::read(&parallel_out).unwrap()
    );
}

#[test]
fn conflicting_flags_exit_1_with_usage() {
    let input = fixture_path();
    let out = egx(&[
        "extract",
        "--input",
        input.to_str().unwrap(),
        "--mode",
        "greedy",
        "--theta",
        "1.25",
    ]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--theta"));
    assert!(err.contains("usage"));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_flag_exits_1() {
    let out = egx(&["extract", "--frobnicate"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn infeasible_instance_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dead.json");
    std::fs::write(
        &path,
        r#"{"nodes": {"n0": {"op": "f", "children": ["n0"], "eclass": "c0", "cost": 1}},
           "root_eclasses": ["c0"]}"#,
    )
    .unwrap();
    let out = egx(&[
        "extract",
        "--input",
        path.to_str().unwrap(),
        "--mode",
        "greedy",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn stats_go_to_stderr_and_stdout_stays_json() {
    let input = fixture_path();
    let out = egx(&[
        "extract",
        "--input",
        input.to_str().unwrap(),
        "--mode",
        "hybrid",
        "--stats",
        "--bks",
        "16",
    ]);
    assert_eq!(code(&out), 0);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("H=17"));
    // default dedup already removed E10 (same op and children as E9), so
    // the threshold only prunes E5
    assert!(err.contains("dedup_removed=1"));
    assert!(err.contains("pruned=1"));
    assert!(err.contains("alpha=0"));
    // stdout holds only the result document
    serde_json::from_str::<serde_json::Value>(stdout(&out).trim()).unwrap();
}

#[test]
fn hybrid_emits_lp_and_warm_start_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture_path();
    let lp = dir.path().join("model.lp");
    let warm = dir.path().join("model.mst");
    let out = egx(&[
        "extract",
        "--input",
        input.to_str().unwrap(),
        "--mode",
        "hybrid",
        "--emit-lp",
        lp.to_str().unwrap(),
        "--emit-warmstart",
        warm.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let lp_text = std::fs::read_to_string(&lp).unwrap();
    assert!(lp_text.starts_with("Minimize"));
    assert!(lp_text.contains("eq5g_"));
    assert!(lp_text.ends_with("End\n"));
    let warm_text = std::fs::read_to_string(&warm).unwrap();
    assert!(warm_text
        .lines()
        .all(|l| l.ends_with(" 0") || l.ends_with(" 1")));
    // exact mode has no warm start to emit
    let out = egx(&[
        "extract",
        "--input",
        input.to_str().unwrap(),
        "--mode",
        "exact",
        "--emit-warmstart",
        warm.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn bench_writes_alpha_rows() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    std::fs::copy(fixture_path(), corpus.join("motivating.json")).unwrap();
    let bks = dir.path().join("bks.json");
    std::fs::write(&bks, r#"{"motivating": 16}"#).unwrap();
    let report = dir.path().join("report.csv");
    let out = egx(&[
        "bench",
        "--corpus",
        corpus.to_str().unwrap(),
        "--methods",
        "greedy,hybrid:1.25",
        "--bks",
        bks.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(&report).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "benchmark,method,theta,workers,wall_time_s,cost,H,BKS,alpha,status"
    );
    let greedy_row = lines.clone().find(|l| l.contains(",greedy,")).unwrap();
    assert!(greedy_row.contains(",17,17,16,1,heuristic"));
    let hybrid_row = lines.find(|l| l.contains(",hybrid,")).unwrap();
    assert!(hybrid_row.contains(",16,17,16,0,optimal"));
}

#[test]
fn bench_empty_corpus_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    let out = egx(&[
        "bench",
        "--corpus",
        corpus.to_str().unwrap(),
        "--methods",
        "greedy",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        stdout(&out),
        "benchmark,method,theta,workers,wall_time_s,cost,H,BKS,alpha,status\n"
    );
}

#[test]
fn bench_method_typo_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    let out = egx(&[
        "bench",
        "--corpus",
        corpus.to_str().unwrap(),
        "--methods",
        "greedly",
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("greedly"));
}

#[test]
fn egx_threads_env_sets_the_parallel_default() {
    let input = fixture_path();
    let out = Command::new(env!("CARGO_BIN_EXE_egx"))
        .env("EGX_THREADS", "2")
        .args([
            "extract",
            "--input",
            input.to_str().unwrap(),
            "--mode",
            "parallel",
        ])
        .output()
        .expect("binary runs");
    assert_eq!(code(&out), 0);
    let json: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(json["dag_cost"], 17);
}
