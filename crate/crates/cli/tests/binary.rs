use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qmzk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmzk")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("qmzk-binary");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_scenario(name: &str, json: &str) -> PathBuf {
    let p = scratch(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bundled_theorem4_scenario_exits_zero() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/theorem4-sweep.json");
    let o = qmzk(&["run", "--scenario", s(&path)]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{out}");
    assert!(out.starts_with("theorem4-sweep seed="), "{out}");
    assert!(!out.contains("[FAIL]"));
}

#[test]
fn exit_code_for_each_outcome() {
    let fail = write_scenario("fail.json", r#"{"kind":"lhi-check","seed":1,"params":{"eps":0.2}}"#);
    assert_eq!(code(&qmzk(&["run", "--scenario", s(&fail)])), 1);

    let abort = write_scenario("abort.json", r#"{"kind":"lhi-check","seed":1,"params":{"eps":1.0}}"#);
    assert_eq!(code(&qmzk(&["run", "--scenario", s(&abort)])), 3);

    let cap = write_scenario("cap.json", r#"{"kind":"theorem4-sweep","seed":1,"params":{"provers":9}}"#);
    let o = qmzk(&["run", "--scenario", s(&cap)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));

    let bad = write_scenario("bad.json", r#"{"kind":"qmip-run","seed":1,"qubits":4}"#);
    assert_eq!(code(&qmzk(&["run", "--scenario", s(&bad)])), 2);

    assert_eq!(code(&qmzk(&["run", "--scenario", "/nonexistent/scenario.json"])), 2);
    assert_eq!(code(&qmzk(&["frobnicate"])), 2);
    assert_eq!(code(&qmzk(&["invariants", "nope"])), 2);
}

#[test]
fn json_output_can_be_rendered_again() {
    let sc = write_scenario("qmip.json", r#"{"kind":"qmip-run","seed":3,"params":{"eps":0.1,"samples":300}}"#);
    let out = scratch("qmip-report.json");
    let o = qmzk(&["run", "--scenario", s(&sc), "--format", "json", "--out", s(&out), "--seed", "8"]);
    assert_eq!(code(&o), 0);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["scenario"]["seed"], 8);
    assert_eq!(doc["scenario"]["params"]["samples"], 300);

    let r = qmzk(&["render", s(&out)]);
    assert_eq!(code(&r), 0);
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.starts_with("qmip-run seed=8"), "{text}");
    assert_eq!(text.matches("[PASS]").count(), doc["checks"].as_array().unwrap().len());
}

#[test]
fn invariants_lists_the_catalogue() {
    let o = qmzk(&["invariants", "crypto-suite", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let names: Vec<_> = v.as_array().unwrap().iter().map(|e| e["check"].as_str().unwrap().to_string()).collect();
    assert!(names.contains(&"binding exhaustive scan".to_string()));
}
