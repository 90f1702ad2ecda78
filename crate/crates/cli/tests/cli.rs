use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn isopulse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isopulse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, sub: &str, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    isopulse(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let header = rd.headers().unwrap().iter().map(str::to_string).collect();
    let rows = rd
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

/// Every file next to the manifest is listed once, with a matching hash.
fn assert_manifest_complete(dir: &Path) {
    let m = json(&dir.join("manifest.json"));
    let listed: Vec<&str> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["path"].as_str().unwrap())
        .collect();
    let unique: BTreeSet<&str> = listed.iter().copied().collect();
    assert_eq!(unique.len(), listed.len(), "duplicate entries in {listed:?}");
    let on_disk: BTreeSet<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    assert_eq!(on_disk, unique.iter().map(|s| s.to_string()).collect());
    for a in m["artifacts"].as_array().unwrap() {
        let bytes = fs::read(dir.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn simulate_writes_the_trajectory_columns() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(
        tmp.path(),
        "simulate",
        &["--mu", "8", "--tau", "6", "--t-end", "200", "--svg"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&tmp.path().join("trajectory.csv"));
    assert_eq!(header, ["t", "x1", "x2", "u1", "u2"]);
    let last = rows.last().unwrap();
    let x1: f64 = last[1].parse().unwrap();
    assert!(x1 > 900.0, "pulse should switch the toggle, ended at x1 = {x1}");
    assert!(tmp.path().join("phase.svg").exists());
    assert_manifest_complete(tmp.path());
}

#[test]
fn at_times_gives_one_row_per_time() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(tmp.path(), "simulate", &["--at-times", "0,1,2", "--t-end", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = csv_rows(&tmp.path().join("trajectory.csv"));
    assert_eq!(rows.len(), 3);
    let ts: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(ts, [0.0, 1.0, 2.0]);
}

#[test]
fn missing_model_file_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("no_such_model.json");
    let o = run_in(
        &tmp.path().join("out"),
        "simulate",
        &["--model", missing.to_str().unwrap()],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no_such_model.json"), "{}", stderr(&o));
}

#[test]
fn model_file_round_trips() {
    let tmp = TempDir::new().unwrap();
    let cfg = isopulse_core::ModelConfig::toggle_switch();
    let path = tmp.path().join("toggle.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let o = run_in(
        &tmp.path().join("out"),
        "simulate",
        &["--model", path.to_str().unwrap(), "--t-end", "1"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn fine_tolerance_design_reports_its_constraint() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(
        tmp.path(),
        "design",
        &["--epsilon", "1e-14", "--e-max", "100", "--grid", "12"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d = json(&tmp.path().join("design.json"));
    assert!(["IsostableReached", "BudgetSaturated", "Both"].contains(&d["active_constraint"].as_str().unwrap()));
    assert!(d["r"].as_f64().unwrap() <= -1e-14 * (1.0 - 1e-9));
    let (header, rows) = csv_rows(&tmp.path().join("r_field.csv"));
    assert_eq!(header, ["mu", "tau", "r", "status"]);
    assert_eq!(rows.len(), 144);
    assert_manifest_complete(tmp.path());
}

#[test]
fn saturated_design_spends_the_budget() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(
        tmp.path(),
        "design",
        &["--epsilon", "1e-2", "--e-max", "26", "--grid", "0"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d = json(&tmp.path().join("design.json"));
    assert_eq!(d["active_constraint"], "BudgetSaturated");
    let (mu, tau) = (d["mu"].as_f64().unwrap(), d["tau"].as_f64().unwrap());
    assert!((mu * tau - 26.0).abs() <= 1e-9, "mu tau = {}", mu * tau);
}

#[test]
fn design_feeds_simulate() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path().join("d");
    assert_eq!(code(&run_in(&d, "design", &["--e-max", "40", "--grid", "0"])), 0);
    let s = tmp.path().join("s");
    let o = run_in(
        &s,
        "simulate",
        &["--design", d.join("design.json").to_str().unwrap(), "--t-end", "100"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = csv_rows(&s.join("trajectory.csv"));
    let x1: f64 = rows.last().unwrap()[1].parse().unwrap();
    assert!(x1 > 900.0);
}

#[test]
fn non_positive_epsilon_is_rejected() {
    let tmp = TempDir::new().unwrap();
    for eps in ["0", "-1e-3"] {
        let o = run_in(tmp.path(), "design", &[&format!("--epsilon={eps}")]);
        assert_eq!(code(&o), 2, "{}", stderr(&o));
    }
}

#[test]
fn tiny_budget_is_infeasible() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(tmp.path(), "design", &["--e-max", "1", "--grid", "0"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("tau in ["), "{}", stderr(&o));
}

#[test]
fn envelope_contours_separate_at_fine_tolerance() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(
        tmp.path(),
        "envelope",
        &["--p-mid", "int", "--epsilon", "1e-14", "--sigma", "38"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&tmp.path().join("intersection.json"));
    assert_eq!(r["empty_contours"].as_array().unwrap().len(), 0);
    for p in r["pairs"].as_array().unwrap() {
        assert_eq!(p["report"]["crossings"].as_array().unwrap().len(), 0, "{p}");
    }
    let (header, _) = csv_rows(&tmp.path().join("membership.csv"));
    assert_eq!(header, ["mu", "tau", "r1", "r2", "member", "diverged"]);
    assert_manifest_complete(tmp.path());
}

#[test]
fn envelope_contours_cross_at_coarse_tolerance() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(
        tmp.path(),
        "envelope",
        &["--p-mid", "int", "--epsilon", "1e-2", "--sigma", "4"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&tmp.path().join("intersection.json"));
    let total: usize = r["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["report"]["crossings"].as_array().unwrap().len())
        .sum();
    assert!(total > 0);
}

#[test]
fn equal_bounds_suppress_the_report() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(tmp.path(), "envelope", &["--p1", "int", "--p2", "int", "--grid", "8"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&tmp.path().join("intersection.json"));
    assert_eq!(r["pairs"][0]["report"]["suppressed"], true);
}

#[test]
fn regulate_case_study_contains_the_state() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(tmp.path(), "regulate", &["--t-end", "60"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "anchors.json",
        "trajectory.csv",
        "events.json",
        "phase.svg",
        "containment.json",
    ] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let c = json(&tmp.path().join("containment.json"));
    assert_eq!(c["pass"], true, "{c}");
    assert_eq!(c["outside_box"], 0);
    assert!(!json(&tmp.path().join("events.json"))["events"]
        .as_array()
        .unwrap()
        .is_empty());
    assert_manifest_complete(tmp.path());
}

#[test]
fn zero_anchors_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&run_in(tmp.path(), "regulate", &["--n-anchors", "0"])), 2);
}

#[test]
fn loose_delta_flags_anchors_and_warns() {
    let tmp = TempDir::new().unwrap();
    let o = run_in(tmp.path(), "regulate", &["--delta", "0.5", "--t-end", "20"]);
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    let table = json(&tmp.path().join("anchors.json"));
    let anchors = table["anchors"].as_array().unwrap();
    assert!(anchors
        .iter()
        .any(|a| a["lowering"].is_null() || a["raising"].is_null()));
    assert!(anchors.iter().any(|a| !a["lowering"].is_null()));
    // a half-unit target fires only zero pulses and the state escapes;
    // the event log is still written
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(tmp.path().join("events.json").exists());
    assert_manifest_complete(tmp.path());
}

#[test]
fn artifacts_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(code(&run_in(d, "design", &["--e-max", "30", "--grid", "10"])), 0);
    }
    for f in ["design.json", "r_field.csv", "r_field.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn worker_count_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let run = |w: &str| {
        Command::new(env!("CARGO_BIN_EXE_isopulse"))
            .args(["design", "--grid", "6", "--out", tmp.path().join(w).to_str().unwrap()])
            .env("ISOPULSE_WORKERS", w)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("2")), 0);
    assert_eq!(code(&run("many")), 2);
}

#[test]
fn check_passes() {
    let tmp = TempDir::new().unwrap();
    let o = isopulse(&["check", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    assert_manifest_complete(tmp.path());
}
