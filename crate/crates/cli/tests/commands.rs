//! Exit codes and outputs of the binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anomix"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("config").join(name)
}

fn code(cmd: &mut Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

#[test]
fn shipped_configs_validate() {
    for name in ["default.json", "small.json", "ns.json"] {
        let out = bin().arg("validate").arg("--config").arg(config(name)).output().unwrap();
        assert!(out.status.success(), "{name}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("valid"));
    }
}

#[test]
fn malformed_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"cascade": {"mode": "desk", "colour": 1}}"#).unwrap();
    assert_eq!(code(bin().arg("validate").arg("--config").arg(&bad)), 2);
    assert_eq!(code(bin().arg("sweep").arg("--config").arg(dir.path().join("missing.json"))), 2);
    assert_eq!(code(bin().arg("sweep")), 2);
}

#[test]
fn failing_constraint_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config("default.json")).unwrap()).unwrap();
    v["cascade"]["desk"]["ratios"] = serde_json::json!([6]);
    let path = dir.path().join("ratio6.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let out = bin().arg("validate").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_writes_table_and_profiles() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(bin().args(["sweep", "--jobs", "1", "--config"]).arg(config("small.json")).arg("--out").arg(dir.path())), 0);
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.starts_with("q,kappa,e_end,dissipated_fraction"));
    for q in 0..3 {
        let prof = std::fs::read_to_string(dir.path().join(format!("profile_q{q}.csv"))).unwrap();
        assert!(prof.starts_with("t,rate,window_id"));
    }
}

#[test]
fn weakened_stage_fails_mix_test_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config("small.json")).unwrap()).unwrap();
    v["amplitude_scale"] = serde_json::json!(0.5);
    let path = dir.path().join("half.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let out = bin().arg("mix-test").arg("--config").arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.path().join("mismatch_q0.raw").exists());
    assert!(dir.path().join("mix_report.json").exists());
}
