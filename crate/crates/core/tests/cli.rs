//! End-to-end CLI behavior: exit codes, artifact layout, and manifest-driven
//! re-execution.

use dualtask::domain::{
    CollectionComplexity, HumanAction, Outcome, RobotAction, TrackingComplexity, TrialRecord,
};
use dualtask::log_io::write_trial_log_file;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualtask"))
}

fn run_in(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["--help"]).0, 0);
    assert_eq!(run_in(dir.path(), &["--version"]).0, 0);
    assert_eq!(run_in(dir.path(), &["simulate", "--help"]).0, 0);
}

#[test]
fn unknown_flag_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run_in(dir.path(), &["simulate", "--no-such-flag"]);
    assert_eq!(code, 1);
}

#[test]
fn missing_log_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) =
        run_in(dir.path(), &["fit", "--log", "absent.csv", "--seed", "1", "--out", "p.toml"]);
    assert_eq!(code, 1, "stderr: {err}");
}

#[test]
fn empty_log_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    let (code, _, err) =
        run_in(dir.path(), &["fit", "--log", "empty.csv", "--seed", "1", "--out", "p.toml"]);
    assert_eq!(code, 1, "stderr: {err}");
}

/// A log with no high-complexity trials cannot identify the high-complexity
/// reliance coefficients.
#[test]
fn missing_complexity_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut logs = Vec::new();
    for p in 0..2 {
        let records: Vec<TrialRecord> = (0..12u32)
            .map(|i| {
                let rely = i % 4 != 0;
                TrialRecord {
                    participant_id: format!("p{p}"),
                    trial_index: i + 1,
                    c1: CollectionComplexity::Low,
                    c2: if i % 2 == 0 { TrackingComplexity::Slow } else { TrackingComplexity::Normal },
                    robot_action: RobotAction::AttemptAutonomous,
                    human_action: Some(if rely { HumanAction::Rely } else { HumanAction::Interrupt }),
                    outcome: if rely { Some(Outcome::Success) } else { None },
                    trust_report: Some(6.0 + 0.2 * i as f64),
                    tracking_score: 75.0 + (i % 5) as f64,
                }
            })
            .collect();
        logs.push(records);
    }
    write_trial_log_file(&dir.path().join("low_only.csv"), &logs).unwrap();
    let (code, _, err) =
        run_in(dir.path(), &["fit", "--log", "low_only.csv", "--seed", "1", "--out", "p.toml"]);
    assert_eq!(code, 2, "stderr: {err}");
    assert!(err.contains("unidentifiable") || err.contains("never observed"), "stderr: {err}");
}

#[test]
fn bad_policy_map_grid_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run_in(
        dir.path(),
        &["policy-map", "--c1", "low", "--t-min", "5", "--t-max", "1", "--out", "m.csv"],
    );
    assert_eq!(code, 1, "stderr: {err}");
    assert!(!dir.path().join("m.csv").exists());
}

#[test]
fn simulate_writes_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run_in(
        dir.path(),
        &["simulate", "--policy", "greedy", "--trials", "10", "--seed", "7", "--out", "run.csv"],
    );
    assert_eq!(code, 0, "stderr: {err}");
    assert!(out.contains("total score"));
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11, "header plus one row per trial");
    assert!(csv.starts_with("participant_id,"));
    assert!(dir.path().join("run.csv.summary.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.csv.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn rerun_reproduces_artifacts_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run_in(
        dir.path(),
        &["gen-logs", "--participants", "2", "--trials", "15", "--seed", "11", "--out", "log.csv"],
    );
    assert_eq!(code, 0, "stderr: {err}");
    let original = std::fs::read(dir.path().join("log.csv")).unwrap();

    std::fs::remove_file(dir.path().join("log.csv")).unwrap();
    let (code, _, err) = run_in(dir.path(), &["rerun", "--manifest", "log.csv.manifest.json"]);
    assert_eq!(code, 0, "stderr: {err}");
    assert_eq!(std::fs::read(dir.path().join("log.csv")).unwrap(), original);

    // a rerun must not be re-runnable from its own trail
    let (code, _, err) = run_in(dir.path(), &["rerun", "--manifest", "log.csv.manifest.json"]);
    assert_eq!(code, 0, "rerun rewrites the original manifest: {err}");
}

#[test]
fn fit_roundtrip_on_generated_logs() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run_in(
        dir.path(),
        &["gen-logs", "--participants", "4", "--trials", "30", "--seed", "3", "--out", "log.csv"],
    );
    assert_eq!(code, 0, "stderr: {err}");
    let (code, out, err) = run_in(
        dir.path(),
        &[
            "fit", "--log", "log.csv", "--seed", "5", "--mc-samples", "10", "--restarts", "2",
            "--out", "fitted.toml",
        ],
    );
    assert!(code == 0 || code == 2, "code {code}, stderr: {err}");
    assert!(out.contains("fit:"));
    // the fitted document loads back as a valid parameter set
    let params = dualtask::params_io::load_params(&dir.path().join("fitted.toml")).unwrap();
    params.validate().unwrap();
    assert!(dir.path().join("fitted_trust.csv").exists());
    assert!(dir.path().join("fitted_engagement.csv").exists());
}

#[test]
fn evaluate_report_layout() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run_in(
        dir.path(),
        &[
            "evaluate", "--first", "greedy", "--second", "random", "--sessions", "4", "--trials",
            "8", "--seed", "2", "--out", "eval.txt",
        ],
    );
    assert_eq!(code, 0, "stderr: {err}");
    let report = std::fs::read_to_string(dir.path().join("eval.txt")).unwrap();
    assert!(report.contains("mean score difference"));
    let sessions = std::fs::read_to_string(dir.path().join("eval_sessions.csv")).unwrap();
    assert_eq!(sessions.lines().count(), 5, "header plus one row per session pair");
}
