use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn horizon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horizon")).args(args).env_remove("HORIZON_WORKERS").output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn catalog_lists_and_describes() {
    let list = json(&horizon(&["catalog"]));
    assert!(list.as_array().unwrap().iter().any(|v| v == "heisenberg"));
    let al = json(&horizon(&["catalog", "agrachev_lee(3)"]));
    assert_eq!(al["step_at_origin"], 3);
    assert_eq!(horizon(&["catalog", "nope"]).status.code(), Some(2));
}

#[test]
fn endpoint_of_unit_control() {
    let dir = tempfile::tempdir().unwrap();
    let u = write(dir.path(), "u.json", r#"{"breakpoints":[0,1],"values":[[1,0]]}"#);
    let v = json(&horizon(&["endpoint", "--system", "heisenberg", "--control", &u]));
    let e: Vec<f64> = serde_json::from_value(v["endpoint"].clone()).unwrap();
    assert!((e[0] - 1.0).abs() < 1e-12 && e[1].abs() < 1e-12 && e[2].abs() < 1e-12);
}

#[test]
fn endpoint_files_and_zero_control() {
    let dir = tempfile::tempdir().unwrap();
    let u = write(dir.path(), "u.json", r#"{"breakpoints":[0,0.5,1],"values":[[0,0],[0,0]]}"#);
    let out = dir.path().join("run");
    let o = horizon(&["endpoint", "--system", "unicycle", "--x", "0.5,-1,0.25", "--control", &u, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("endpoint.json")).unwrap()).unwrap();
    assert_eq!(v["endpoint"], serde_json::json!([0.5, -1.0, 0.25]));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x_1,x_2,x_3\n"));
}

#[test]
fn blowup_exits_with_domain_escape() {
    let dir = tempfile::tempdir().unwrap();
    let u = write(dir.path(), "u.json", r#"{"breakpoints":[0,1],"values":[[1e4,1e4]]}"#);
    let o = horizon(&["endpoint", "--system", "agrachev_lee(3)", "--control", &u]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("domain escape"));
}

#[test]
fn bad_control_file_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let u = write(dir.path(), "u.json", r#"{"breakpoints":[0,1],"values":[]}"#);
    assert_eq!(horizon(&["endpoint", "--system", "heisenberg", "--control", &u]).status.code(), Some(2));
    assert_eq!(horizon(&["--p", "0.5", "steer", "--system", "heisenberg", "--y", "0,0,0"]).status.code(), Some(2));
}

#[test]
fn jacobian_has_full_rank() {
    let dir = tempfile::tempdir().unwrap();
    let u = write(dir.path(), "u.json", r#"{"breakpoints":[0,0.5,1],"values":[[1,0],[0,1]]}"#);
    let v = json(&horizon(&["jacobian", "--system", "heisenberg", "--control", &u]));
    assert_eq!(v["rank"], 3);
}

#[test]
fn steer_to_same_point_is_zero() {
    let v = json(&horizon(&["steer", "--system", "heisenberg", "--x", "0.1,0.2,0.3", "--y", "0.1,0.2,0.3"]));
    assert_eq!(v["T"], 0.0);
    assert!(v["phi"].as_array().unwrap().iter().all(|p| p == 0.0));
}

#[test]
fn steer_vertical() {
    let v = json(&horizon(&["steer", "--system", "heisenberg", "--y", "0,0,0.01"]));
    assert!(v["residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn steer_rejects_inadmissible_exponent() {
    let o = horizon(&["--p", "1.6", "steer", "--system", "agrachev_lee(3)", "--y", "0,-0.1"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1.5"));
}

#[test]
fn lift_writes_controls_and_moduli() {
    let dir = tempfile::tempdir().unwrap();
    let u = write(dir.path(), "u.json", r#"{"breakpoints":[0,1],"values":[[0,0]]}"#);
    let path = write(dir.path(), "path.json", r#"{"s":[0,0.5,1],"y":[[0,0,0],[0.02,0,0.001],[0.04,0,0.002]]}"#);
    let out = dir.path().join("lift");
    let o = horizon(&[
        "lift", "--system", "heisenberg", "--anchor-control", &u, "--path", &path, "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..3 {
        assert!(out.join(format!("control_{k:04}.json")).is_file());
    }
    let moduli = fs::read_to_string(out.join("moduli.csv")).unwrap();
    assert_eq!(moduli.lines().count(), 3);
}

#[test]
fn geodesics_trivial_one_cluster() {
    let v = json(&horizon(&["--substeps", "4", "geodesics", "--system", "trivial(2)", "--x", "0,0", "--y", "1,-1", "--n-seeds", "6", "--segments", "8"]));
    assert_eq!(v["energy_clusters"].as_array().unwrap().len(), 1);
}

#[test]
fn geodesics_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let o = horizon(&[
            "--substeps", "4", "--seed", "5", "--workers", workers, "--out", out.to_str().unwrap(),
            "geodesics", "--system", "heisenberg", "--y", "0.1,0.2,0.3", "--n-seeds", "6", "--segments", "8",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(out.join("ladder.csv")).unwrap(), fs::read(out.join("report.json")).unwrap())
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
}
