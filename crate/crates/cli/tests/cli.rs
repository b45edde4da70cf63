use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn epictrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epictrl"))
        .args(args)
        .env_remove("EPICTRL_OUT")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn error_kind(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr holds error JSON");
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn toy_optimum_verifies_and_matches_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let opt = dir.path().join("opt");
    let o = epictrl(&["optimize", "--preset", "toy", "--out", opt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["result.json", "log.csv", "trajectory.csv", "controls.svg", "controls.csv", "infectious.svg", "infectious.csv"] {
        assert!(opt.join(f).exists(), "{f} missing");
    }
    let result = read_json(&opt.join("result.json"));
    let tau = result["schedule"]["tau"][0].as_f64().unwrap();

    let grid = dir.path().join("grid");
    let o = epictrl(&["oracle", "--preset", "toy", "--resolution", "0.05", "--out", grid.to_str().unwrap()]);
    assert!(o.status.success());
    let oracle = read_json(&grid.join("oracle.json"));
    let tau_grid = oracle["schedule"]["tau"][0].as_f64().unwrap();
    assert!((tau - tau_grid).abs() <= 0.05, "{tau} vs {tau_grid}");
    assert!(result["j"].as_f64().unwrap() <= oracle["j"].as_f64().unwrap());

    let v = dir.path().join("verify");
    let o = epictrl(&[
        "verify",
        "--preset",
        "toy",
        "--schedule",
        opt.join("result.json").to_str().unwrap(),
        "--out",
        v.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("overall: PASS"));
    assert_eq!(read_json(&v.join("verification.json"))["passed"], Value::Bool(true));
}

#[test]
fn verify_exits_nonzero_on_a_suboptimal_policy() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("sched.json");
    std::fs::write(&sched, r#"{"groups": 1, "weeks": 1, "tau": [2.0]}"#).unwrap();
    let o = epictrl(&[
        "verify",
        "--preset",
        "toy",
        "--schedule",
        sched.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL pmp"));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = epictrl(&["optimize", "--preset", "toy", "--seed", "3", "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["result.json", "log.csv", "trajectory.csv", "controls.csv", "infectious.csv", "scenario.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn oracle_guard_reports_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = epictrl(&["oracle", "--preset", "cities3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "oracle_guard");
    assert!(dir.path().join("error.json").exists());
}

#[test]
fn missing_scenario_source_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = epictrl(&["simulate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "usage");
    let o = epictrl(&["simulate", "--preset", "cities4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(error_kind(&o), "invalid_scenario");
    assert!(String::from_utf8_lossy(&o.stderr).contains("cities3"));
}

#[test]
fn env_var_overrides_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("from_env");
    let flag_dir = dir.path().join("from_flag");
    let o = Command::new(env!("CARGO_BIN_EXE_epictrl"))
        .args(["simulate", "--preset", "toy", "--out", flag_dir.to_str().unwrap()])
        .env("EPICTRL_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_dir.join("trajectory.csv").exists());
    assert!(!flag_dir.exists());
}

#[test]
fn every_plot_has_its_csv_with_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let o = epictrl(&["simulate", "--preset", "cities3", "--fraction", "0.5", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let mut svgs = 0;
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "svg") {
            svgs += 1;
            assert!(path.with_extension("csv").exists(), "{} lacks a CSV", path.display());
        }
    }
    assert_eq!(svgs, 3);
    let csv = std::fs::read_to_string(dir.path().join("states.csv")).unwrap();
    let first = csv.lines().nth(2).unwrap().split(',').nth(1).unwrap();
    let mantissa = first.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{first}");

    let quiet = dir.path().join("quiet");
    let o = epictrl(&["simulate", "--preset", "toy", "--no-plots", "--out", quiet.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(quiet.join("controls.csv").exists() && !quiet.join("controls.svg").exists());
}

#[test]
fn exported_scenario_reloads_to_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let o = epictrl(&["simulate", "--preset", "cities3", "--fraction", "0.3", "--out", a.to_str().unwrap()]);
    assert!(o.status.success());
    let b = dir.path().join("b");
    let o = epictrl(&[
        "simulate",
        "--scenario",
        a.join("scenario.json").to_str().unwrap(),
        "--fraction",
        "0.3",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(a.join("trajectory.csv")).unwrap(),
        std::fs::read(b.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn strict_rejects_assumption_violations() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(epictrl(&["simulate", "--preset", "toy", "--out", a.to_str().unwrap()]).status.success());
    let mut sc = read_json(&a.join("scenario.json"));
    sc["c"] = serde_json::json!([0.0, 0.0]);
    let path = dir.path().join("free.json");
    std::fs::write(&path, sc.to_string()).unwrap();
    let args = |strict: bool| {
        let mut v = vec!["simulate", "--scenario", path.to_str().unwrap(), "--out", a.to_str().unwrap()];
        if strict {
            v.push("--strict");
        }
        v.iter().map(|s| s.to_string()).collect::<Vec<_>>()
    };
    let lenient = Command::new(env!("CARGO_BIN_EXE_epictrl")).args(args(false)).output().unwrap();
    assert!(lenient.status.success());
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("warning"));
    let strict = Command::new(env!("CARGO_BIN_EXE_epictrl")).args(args(true)).output().unwrap();
    assert_eq!(strict.status.code(), Some(2));
    assert_eq!(error_kind(&strict), "assumptions");
}
