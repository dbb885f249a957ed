use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fabric_sim::{emit_config, load_config, preset};
use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fabric-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = preset("waiting-2peer:waiting").unwrap();
    cfg.workload.pool_size = Some(300);
    let path = dir.join("small.json");
    fs::write(&path, emit_config(&cfg)).unwrap();
    path
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn help_lists_presets() {
    let out = bin(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in fabric_sim::presets::names() {
        assert!(text.contains(name), "{name} missing from help");
    }
}

#[test]
fn run_twice_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bin(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    assert!(fa.iter().any(|(n, _)| n == "summary.csv"));
    assert_eq!(fa, fb);
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    bin(&["run", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    bin(&[
        "run",
        cfg.to_str().unwrap(),
        "--seed",
        "99",
        "--out",
        b.to_str().unwrap(),
    ]);
    let sa = fs::read(a.join("summary.csv")).unwrap();
    let sb = fs::read(b.join("summary.csv")).unwrap();
    assert_ne!(sa, sb);
}

#[test]
fn missing_config_exits_2() {
    let o = bin(&["run", "/nonexistent/cfg.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_config(dir.path());
    let mut v: Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    v["peers"]["count"] = Value::from(0);
    fs::write(&path, v.to_string()).unwrap();
    let o = bin(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("peers.count"));
}

#[test]
fn unknown_preset_and_bad_flag_exit_2() {
    assert_eq!(bin(&["preset", "no-such-preset"]).status.code(), Some(2));
    assert_eq!(
        bin(&["preset", "leader-250x300:nope"]).status.code(),
        Some(2)
    );
    assert_eq!(bin(&["--frobnicate"]).status.code(), Some(2));
}

#[test]
fn integrity_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_config(dir.path());
    let mut v: Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    v["fault"] = serde_json::json!({ "phase2_out_of_order_at": 3 });
    fs::write(&path, v.to_string()).unwrap();
    let o = bin(&[
        "run",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn emit_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    let o = bin(&[
        "preset",
        "pipeline-400x600:4-1*",
        "--emit",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let back = load_config(&path).unwrap();
    assert_eq!(back, preset("pipeline-400x600:4-1*").unwrap());
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("s");
    let o = bin(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--grid",
        "waiting.tau=3,5",
        "--seeds",
        "1..3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 6);
}
