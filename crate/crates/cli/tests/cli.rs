use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn run(mode: &str, config: &str, extra: &[&str]) -> (TempDir, i32) {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_curvlab"))
        .arg(mode)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--quiet")
        .args(extra)
        .status()
        .unwrap();
    (dir, status.code().unwrap())
}

fn out(dir: &TempDir) -> std::path::PathBuf {
    dir.path().join("out")
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn check_manifest(dir: &Path) -> Value {
    let manifest = json(&dir.join("manifest.json"));
    let listed: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    let mut present: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    present.sort();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(sorted, present);
    for f in manifest["files"].as_array().unwrap() {
        if let Some(sha) = f["sha256"].as_str() {
            let bytes = fs::read(dir.join(f["path"].as_str().unwrap())).unwrap();
            assert_eq!(hex::encode(Sha256::digest(&bytes)), sha);
            assert_eq!(bytes.len() as u64, f["bytes"].as_u64().unwrap());
        }
    }
    manifest
}

const UNIT_MEASURE: &str = r#"{"measure": {"p": 1.0, "grid": [8, 16]}}"#;

#[test]
fn unit_density_gives_the_unit_sphere() {
    let (dir, code) = run("solve-measure", UNIT_MEASURE, &[]);
    assert_eq!(code, 0);
    let o = out(&dir);
    let manifest = check_manifest(&o);
    assert_eq!(manifest["exit_code"], 0);
    for f in ["solution.csv", "surface.obj", "report.json"] {
        assert!(o.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(o.join("solution.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let rho = header.iter().position(|h| *h == "rho").unwrap();
    for line in csv.lines().skip(1) {
        let v: f64 = line.split(',').nth(rho).unwrap().parse().unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }
    let report = json(&o.join("report.json"));
    assert_eq!(report["t_reached"], 1.0);
}

#[test]
fn usage_errors_exit_with_one() {
    let (_, code) = run("solve-measure", r#"{"measure": {"p": 0.0}}"#, &[]);
    assert_eq!(code, 1);
    let (_, code) = run("solve-measure", r#"{"measure": {"p": 1.0, "bogus": 1}}"#, &[]);
    assert_eq!(code, 1);
    let (_, code) = run("solve-graph", UNIT_MEASURE, &[]);
    assert_eq!(code, 1);
    let (_, code) = run("solve-measure", "not json", &[]);
    assert_eq!(code, 1);
    let status = Command::new(env!("CARGO_BIN_EXE_curvlab")).arg("no-such-mode").output().unwrap();
    assert_eq!(status.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = r#"{"inequalities": {"n_values": [3, 4], "sample_count": 40}}"#;
    let (a, code_a) = run("verify-inequalities", cfg, &["--seed", "7"]);
    let (b, code_b) = run("verify-inequalities", cfg, &["--seed", "7"]);
    assert_eq!((code_a, code_b), (0, 0));
    for f in ["campaign.csv", "summary.json"] {
        assert_eq!(fs::read(out(&a).join(f)).unwrap(), fs::read(out(&b).join(f)).unwrap(), "{f}");
    }
    let (c, _) = run("verify-inequalities", cfg, &["--seed", "8"]);
    assert_ne!(fs::read(out(&a).join("campaign.csv")).unwrap(), fs::read(out(&c).join("campaign.csv")).unwrap());
    let manifest = check_manifest(&out(&a));
    assert_eq!(manifest["config"]["seed"], 7);
}

#[test]
fn graph_solve_recovers_the_cap() {
    let cfg = r#"{"graph": {"q": 0.0, "nodes": 17, "boundary": {"kind": "cap", "radius": 2.0}}}"#;
    let (dir, code) = run("solve-graph", cfg, &[]);
    assert_eq!(code, 0);
    let report = json(&out(&dir).join("report.json"));
    assert!(report["error_vs_exact"].as_f64().unwrap() < 1e-3);
    check_manifest(&out(&dir));
}

#[test]
fn study_tables_follow_the_grid_list() {
    let two = r#"{"study": {"kind": "ellipsoid_curvature", "axes": [1.0, 1.2, 0.9], "grids": [[16, 32], [32, 64]]}}"#;
    let (dir, code) = run("convergence-study", two, &[]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out(&dir).join("study.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "n1,n2,error,order");
    let order: f64 = csv.lines().nth(2).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!(order > 1.8, "{order}");

    let one = r#"{"study": {"kind": "ellipsoid_curvature", "axes": [1.0, 1.2, 0.9], "grids": [[16, 32]]}}"#;
    let (dir, code) = run("convergence-study", one, &[]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out(&dir).join("study.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "n1,n2,error");

    let exact = r#"{"study": {"kind": "constant_field", "radius": 1.5, "grids": [[8, 16], [16, 32]]}}"#;
    let (dir, code) = run("convergence-study", exact, &[]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out(&dir).join("study.csv")).unwrap();
    assert_eq!(csv.lines().nth(2).unwrap().split(',').nth(3).unwrap(), "n/a");
}

#[test]
fn starved_continuation_exits_with_two_and_still_writes_a_manifest() {
    let cfg = r#"{
        "measure": {"p": 3.0, "grid": [8, 16],
                    "phi": [{"coeff": 1.0, "powers": [0, 0, 0]}, {"coeff": 0.9, "powers": [0, 0, 5]}]},
        "solver": {"max_iter": 1, "homotopy": {"dt_init": 1.0, "dt_min": 1.0}}
    }"#;
    let (dir, code) = run("solve-measure", cfg, &[]);
    assert_eq!(code, 2);
    let manifest = check_manifest(&out(&dir));
    assert_eq!(manifest["exit_code"], 2);
    let report = json(&out(&dir).join("report.json"));
    assert!(report["error"].is_string());
}
