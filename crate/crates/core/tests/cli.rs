use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pslab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn p(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn help_and_usage_errors() {
    let out = pslab(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("solve"));
    assert_eq!(pslab(&["solve"]).status.code(), Some(1));
    assert_eq!(pslab(&["solve", "--scenario", "pigou2", "--grid", "0"]).status.code(), Some(1));
    assert_eq!(pslab(&["solve", "--scenario", "/nonexistent/scenario.json"]).status.code(), Some(1));
}

#[test]
fn solve_matches_golden_rule() {
    let dir = tempfile::tempdir().unwrap();
    let rule = p(&dir, "rule.json");
    let out = pslab(&["solve", "--scenario", "pigou2", "--out", &rule]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["value"].as_f64(), Some(0.75));
    assert!(v["lp"]["duality_gap"].as_f64().unwrap() <= 1e-7);
    assert_eq!(std::fs::read_to_string(&rule).unwrap(), golden("pigou2_rule.json"));
}

#[test]
fn scenario_file_and_bundled_name_agree() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/diamond4.json");
    let a = json(&pslab(&["solve", "--scenario", path.to_str().unwrap(), "--grid", "3"]));
    let b = json(&pslab(&["solve", "--scenario", "diamond4", "--grid", "3"]));
    assert_eq!(a["value"], b["value"]);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let rule = p(&dir, "rule.json");
    assert!(pslab(&["solve", "--scenario", "pigou2", "--out", &rule]).status.success());
    let ok = pslab(&["verify", "--scenario", "pigou2", "--rule", &rule]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json(&ok)["pass"], Value::Bool(true));

    let reveal = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/pigou2_full_revelation.rule.json");
    let bad = pslab(&["verify", "--scenario", "pigou2", "--rule", reveal.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
    let v = json(&bad);
    assert_eq!(v["pass"], Value::Bool(false));
    assert!((v["max_gain"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn variable_cap_is_an_analysis_failure() {
    let out = pslab(&["solve", "--scenario", "diamond4", "--var-cap", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cap"));
}

#[test]
fn sweep_and_bpd_match_golden_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (sweep, bpd) = (p(&dir, "sweep.csv"), p(&dir, "bpd.csv"));
    let out = pslab(&["sweep", "--scenario", "pigou2", "--k", "2", "--step", "0.25", "--out", &sweep]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&sweep).unwrap(), golden("pigou2_sweep_k2.csv"));
    let out = pslab(&["bpd", "--scenario", "pigou2", "--k", "2", "--step", "0.25", "--out", &bpd]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["exact_agreement"], Value::Bool(true));
    assert_eq!(std::fs::read_to_string(&bpd).unwrap(), golden("pigou2_bpd_k2.csv"));
}

#[test]
fn converge_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let rule = p(&dir, "rule.json");
    assert!(pslab(&["solve", "--scenario", "pigou2", "--out", &rule]).status.success());
    let run = |seed: &str| {
        let csv = p(&dir, &format!("conv{seed}.csv"));
        let out = pslab(&[
            "converge", "--scenario", "pigou2", "--rule", &rule, "--n", "4,16", "--samples", "32", "--seed", seed,
            "--out", &csv,
        ]);
        assert_eq!(out.status.code(), Some(0));
        (out.stdout, std::fs::read(&csv).unwrap())
    };
    assert_eq!(run("3"), run("3"));
    let (a, _) = run("3");
    let (b, _) = run("4");
    assert_ne!(a, b, "different seeds draw different samples");
}

#[test]
fn baselines_are_ordered() {
    let v = json(&pslab(&["baselines", "--scenario", "pigou2"]));
    let full = v["full_information"].as_f64().unwrap();
    let opt = v["optimal"].as_f64().unwrap();
    let none = v["no_information"]["value"].as_f64().unwrap();
    let mp = v["mp_bcwe_route_wise"].as_f64().unwrap();
    assert!(full <= opt && opt <= none + 1e-9 && opt <= mp + 1e-9, "{v}");
}
