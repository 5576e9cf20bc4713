use std::path::Path;
use std::process::{Command, Output};

fn caloric(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_caloric")).current_dir(dir).args(args).output().expect("binary runs")
}

fn body(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.starts_with("# created_unix=") && !l.contains("\"created_unix\""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn clean_verify_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = caloric(dir.path(), &["--out", "o", "verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&dir.path().join("o/verify_report.json"));
    let checks = report["data"]["checks"].as_array().unwrap();
    assert!(checks.len() >= 20);
    assert!(checks.iter().all(|c| c["passed"] == true));
}

#[test]
fn injected_energy_sign_fails_frequency_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = caloric(dir.path(), &["--out", "o", "verify", "--inject", "energy-sign"]);
    assert_eq!(out.status.code(), Some(1));
    let report = json(&dir.path().join("o/verify_report.json"));
    let failed: Vec<String> = report["data"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| format!("{}/{}", c["suite"].as_str().unwrap(), c["name"].as_str().unwrap()))
        .collect();
    assert!(failed.iter().all(|f| f.starts_with("frequency/")), "{failed:?}");
    assert!(failed.contains(&"frequency/closed_form_one_plus_h2".to_string()));
}

#[test]
fn order_four_quadrature_fails_exactness() {
    let dir = tempfile::tempdir().unwrap();
    let out = caloric(dir.path(), &["--out", "o", "--quad-order", "4", "verify", "--suite", "gaussquad"]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL gaussquad/quadrature_exactness"), "{stdout}");
}

#[test]
fn unknown_study_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(caloric(dir.path(), &["--out", "o", "study", "bogus"]).status.code(), Some(2));
}

#[test]
fn unknown_suite_and_missing_function_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(caloric(dir.path(), &["--out", "o", "verify", "--suite", "nope"]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "function = \"missing.json\"\n").unwrap();
    assert_eq!(caloric(dir.path(), &["--config", "bad.toml", "--out", "o", "frequency"]).status.code(), Some(2));
    std::fs::write(dir.path().join("typo.toml"), "sede = 3\n").unwrap();
    assert_eq!(caloric(dir.path(), &["--config", "typo.toml", "--out", "o", "frequency"]).status.code(), Some(2));
}

#[test]
fn defaults_are_dumped_and_reloaded() {
    let dir = tempfile::tempdir().unwrap();
    let out = caloric(dir.path(), &["--config", "cfg/run.toml", "--out", "o", "init"]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("cfg/run.toml")).unwrap();
    for key in ["function", "seed", "quad_order", "[neck]", "r_star", "[minkowski]", "[graph]"] {
        assert!(text.contains(key), "missing {key}");
    }
    assert_eq!(caloric(dir.path(), &["--config", "cfg/run.toml", "--out", "o", "init"]).status.code(), Some(0));
}

#[test]
fn minkowski_study_on_h1() {
    let dir = tempfile::tempdir().unwrap();
    let out = caloric(dir.path(), &["--out", "o", "study", "minkowski"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("o/minkowski.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains("config_sha256="));
    assert!(csv.lines().any(|l| l == "r,vol"));
    let fit = json(&dir.path().join("o/minkowski_fit.json"));
    let slope = fit["data"]["slope"].as_f64().unwrap();
    assert!((slope - 1.0).abs() < 0.1, "{slope}");
    assert_eq!(fit["meta"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn neck_study_on_xy_writes_tree_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("xy.toml"), "function = \"builtin:xy\"\n[neck]\nk = 2\n").unwrap();
    let out = caloric(dir.path(), &["--config", "xy.toml", "--out", "o", "study", "neck"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let tree = std::fs::read_to_string(dir.path().join("o/neck_tree.csv")).unwrap();
    assert!(tree.contains("id,parent,depth,class,m,x1,x2,t,radius,neck"));
    let ledger = std::fs::read_to_string(dir.path().join("o/neck_ledger.csv")).unwrap();
    assert!(ledger.contains("class,count,content"));
    let report = json(&dir.path().join("o/neck_report.json"));
    assert_eq!(report["data"]["necks"][0]["weak_passed"], true);
}

#[test]
fn function_file_is_read_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"n":1,"terms":[{"alpha":[2],"k":0,"coef":"1"},{"alpha":[0],"k":1,"coef":"2"}],"caloric_check":true}"#;
    std::fs::create_dir(dir.path().join("cfg")).unwrap();
    std::fs::write(dir.path().join("cfg/h2.json"), spec).unwrap();
    std::fs::write(dir.path().join("cfg/run.toml"), "function = \"h2.json\"\n").unwrap();
    let out = caloric(dir.path(), &["--config", "cfg/run.toml", "--out", "o", "frequency"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&dir.path().join("o/frequency_summary.json"));
    assert_eq!(summary["data"]["nearest_integer_at_tau_max"], 2);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for o in ["a", "b"] {
        let out = caloric(dir.path(), &["--out", o, "--seed", "7", "--threads", "2", "study", "frequency"]);
        assert_eq!(out.status.code(), Some(0));
        let out = caloric(dir.path(), &["--out", o, "--seed", "7", "strata"]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["frequency_profile.csv", "strata_nodal.rle", "strata_summary.json"] {
        assert_eq!(body(&dir.path().join("a").join(f)), body(&dir.path().join("b").join(f)), "{f}");
    }
}

#[test]
fn json_format_emits_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = caloric(dir.path(), &["--out", "o", "--format", "json", "study", "frequency"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&dir.path().join("o/frequency_profile.json"));
    let rows = doc["data"].as_array().unwrap();
    assert!(!rows.is_empty());
    assert!((rows[0]["N"].as_f64().unwrap() - 1.0).abs() < 1e-10);
}
