use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mdpcat_harness::cli::run;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .display()
        .to_string()
}

/// Exit code, standard output and standard error of one invocation.
fn mdpcat(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("mdpcat").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn validate_fixtures() {
    for f in ["chain.mdp", "lift.mdp", "three_stage.mdp", "equal_distance.mdp", "tasks.mdp"] {
        let (code, out, err) = mdpcat(&["validate", &fixture(f)]);
        assert_eq!(code, 0, "{f}: {err}");
        assert!(out.starts_with("ok: "), "{out}");
    }
    let (code, out, _) = mdpcat(&["validate", &fixture("lift.mdp"), &fixture("three_stage.mdp")]);
    assert_eq!(code, 0);
    assert!(out.contains("2 zigzags"), "{out}");
}

#[test]
fn validate_reports_located_diagnostics() {
    let path = fixture("corrupt/references.mdp");
    let (code, _, err) = mdpcat(&["validate", &path]);
    assert_eq!(code, 1);
    assert!(err.contains(&format!("{path}:")), "{err}");
    assert!(err.contains("unresolved reference"), "{err}");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(mdpcat(&[]).0, 2);
    assert_eq!(mdpcat(&["frobnicate"]).0, 2);
    assert_eq!(mdpcat(&["validate", "/nonexistent/x.mdp"]).0, 2);
    assert_eq!(mdpcat(&["monotonic", &fixture("lift.mdp"), "nope"]).0, 2);
    assert_eq!(mdpcat(&["solve", &fixture("chain.mdp"), "chain", "--gamma", "1.5"]).0, 2);
    let (code, out, _) = mdpcat(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("experiment"));
}

#[test]
fn monotonic_flags_the_equal_distance_grid() {
    let (code, _, err) = mdpcat(&["monotonic", &fixture("equal_distance.mdp"), "equal_distance"]);
    assert_eq!(code, 1);
    assert!(err.contains("monotonicity: FAIL at stage 0 state toA_x2y1"), "{err}");
    let (code, out, _) = mdpcat(&["monotonic", &fixture("lift.mdp"), "task1"]);
    assert_eq!(code, 0);
    assert!(out.contains("monotonicity: OK"), "{out}");
}

#[test]
fn solve_pushout_and_composite() {
    let (code, out, _) = mdpcat(&["solve", &fixture("chain.mdp"), "chain", "--gamma", "0.5"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["values"].is_object() && v["policy"].is_object());

    let (code, out, _) = mdpcat(&["solve", &fixture("three_stage.mdp"), "route"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["stitched_gap"].as_f64().unwrap() <= 1e-6);

    let (code, out, err) = mdpcat(&["pushout", &fixture("lift.mdp"), "goal", "start"]);
    assert_eq!(code, 0, "{err}");
    let w = mdpcat_dsl::parse_workspace("pushout", &out).unwrap();
    assert_eq!(w.mdps["goal_start_pushout"].n_states(), 5);
    w.morphism("goal_start_pushout_left").unwrap();

    let (code, out, _) = mdpcat(&["composite", &fixture("three_stage.mdp"), "route"]);
    assert_eq!(code, 0);
    assert!(mdpcat_dsl::parse_workspace("c", &out).is_ok());
    let (code, out, _) = mdpcat(&["composite", &fixture("three_stage.mdp"), "route", "--json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["embeddings"].as_array().unwrap().len(), 3);
}

#[test]
fn laws_pass() {
    let (code, out, _) = mdpcat(&["laws", "--instances", "20", "--seed", "4"]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir.join("curves")).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn experiment_writes_aligned_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, text, err) = mdpcat(&["experiment", &fixture("tasks.mdp"), "smoke", "--out", out]);
    assert_eq!(code, 0, "{err}");
    assert!(text.contains("compositional") && text.contains("monolithic"), "{text}");
    let files = csv_files(dir.path());
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into()).collect();
    assert_eq!(names, ["compositional_0.csv", "compositional_1.csv", "monolithic_0.csv", "monolithic_1.csv"]);
    let steps = |p: &Path| -> Vec<String> {
        fs::read_to_string(p).unwrap().lines().map(|l| l.split(',').next().unwrap().to_string()).collect()
    };
    let grid = steps(&files[0]);
    assert_eq!(grid[0], "step");
    assert!(files.iter().all(|f| steps(f) == grid));
    let header = fs::read_to_string(&files[0]).unwrap();
    assert!(header.starts_with("step,success_rate,mean_return\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"], serde_json::json!([0, 1]));
}

#[test]
fn experiment_on_a_workspace_zigzag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, err) = mdpcat(&["experiment", &fixture("lift.mdp"), "task1_q", "--seeds", "2", "--out", out]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(csv_files(dir.path()).len(), 4);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_mdpcat");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["validate", &fixture("chain.mdp")]), Some(0));
    assert_eq!(status(&["monotonic", &fixture("equal_distance.mdp"), "equal_distance"]), Some(1));
    assert_eq!(status(&["bogus"]), Some(2));
}
