use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigma2lab")).current_dir(dir).args(args).output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn radial_profile(dir: &Path, rho: &str, eps: &str, name: &str) {
    let out = run(dir, &["radial", "--rho", rho, "--epsilon", eps, "--out", name]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn radial_run_writes_profile_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["radial", "--rho", "0", "--epsilon", "1.35", "--out", "prof.csv"]);
    assert_eq!(out.status.code(), Some(0));
    let rep = report(&out);
    assert_eq!(rep["status"], "pass");
    assert!(rep["results"]["first_integral_residual"].as_f64().unwrap() <= 1e-10);
    let csv = std::fs::read_to_string(dir.path().join("prof.csv")).unwrap();
    assert!(csv.starts_with("s,u,u_s\n"));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("prof.json")).unwrap()).unwrap();
    for key in ["rho", "epsilon", "alpha", "tolerance", "f_spec", "config", "version"] {
        assert!(meta.get(key).is_some(), "{key}");
    }
    assert_eq!(meta["config"]["epsilon"], "1.35");
    assert_eq!(meta["version"], sigma2lab::VERSION);
}

#[test]
fn nonexistence_exits_one_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["radial", "--rho", "2.5", "--epsilon", "0.3"]);
    assert_eq!(out.status.code(), Some(1));
    let rep = report(&out);
    assert_eq!(rep["status"], "fail");
    assert!(rep["error"].as_str().unwrap().contains("no entire radial solution"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["radial", "--bogus", "1"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["radial", "--rho", "0"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["mass-scan", "--profile", "missing.csv"]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.ini"), "[radial]\nepsilonn = 1\n").unwrap();
    assert_eq!(run(dir.path(), &["--config", "bad.ini", "radial", "--rho", "0", "--epsilon", "1"]).status.code(), Some(2));
    std::fs::write(dir.path().join("nan.ini"), "[radial]\nepsilon = abc\n").unwrap();
    assert_eq!(run(dir.path(), &["--config", "nan.ini", "radial", "--rho", "0"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.ini"), "rho = 0.5\n[radial]\nepsilon = 0.8\nout = a.csv\n").unwrap();
    let out = run(dir.path(), &["--config", "run.ini", "radial", "--epsilon", "0.6"]);
    assert_eq!(out.status.code(), Some(0));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(meta["epsilon"], 0.6);
    assert_eq!(meta["rho"], 0.5);
    assert_eq!(meta["config"]["rho"], "0.5");
}

#[test]
fn mass_scan_of_exported_profile() {
    let dir = tempfile::tempdir().unwrap();
    radial_profile(dir.path(), "0.5", "0.8", "p.csv");
    let out = run(dir.path(), &["mass-scan", "--profile", "p.csv", "--t-grid=0:-6:25", "--out", "scan.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(csv.starts_with("t,N,P,Q,V,M,M_alt,dM\n"));
    assert_eq!(csv.lines().count(), 26);
    for line in csv.lines().skip(1) {
        let m: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert!(m.abs() < 1e-6);
    }
    let half = run(dir.path(), &["mass-scan", "--profile", "p.csv", "--forcing-scale", "0.5"]);
    assert_eq!(half.status.code(), Some(0));
    assert!(report(&half)["results"]["max_increase"].as_f64().unwrap() >= 1e-3);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    radial_profile(dir.path(), "0.5", "0.2", "p.csv");
    let args = ["mass-scan", "--profile", "p.csv", "--n", "20", "--half-width", "3", "--t-grid=-0.5:-0.6:4"];
    let a = run(dir.path(), &[&args[..], &["--out", "a.csv"]].concat());
    let b = run(dir.path(), &[&args[..], &["--out", "b.csv"]].concat());
    assert_eq!(a.status.code(), b.status.code());
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
}

#[test]
fn pohozaev_cone_field_and_blowdown_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    radial_profile(dir.path(), "0", "1.35", "p0.csv");
    let out = run(dir.path(), &["pohozaev", "--profile", "p0.csv", "--radius", "1", "--out", "poh.json"]);
    assert_eq!(out.status.code(), Some(0));
    let poh: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("poh.json")).unwrap()).unwrap();
    assert!((poh["rhs"].as_f64().unwrap() - 97.13).abs() < 0.01);
    assert!(poh.get("K_spec").is_some() && poh.get("config").is_some());

    radial_profile(dir.path(), "0.5", "0.2", "p.csv");
    let cone = run(dir.path(), &["cone-check", "--profile", "p.csv", "--n", "20", "--half-width", "3"]);
    assert_eq!(cone.status.code(), Some(0));
    assert_eq!(report(&cone)["results"]["fraction_in_cone"], 1.0);

    let field = run(
        dir.path(),
        &["field-check", "--profile", "p.csv", "--n", "24", "--half-width", "3", "--solution-tol", "0.1", "--divergence-tol", "0.05", "--out", "f.bin"],
    );
    assert_eq!(field.status.code(), Some(0), "{}", String::from_utf8_lossy(&field.stdout));
    let loaded = sigma2lab::field::ScalarField4::load(&dir.path().join("f.bin")).unwrap();
    assert_eq!(loaded.extent, [24; 4]);
    let grid_cone = run(dir.path(), &["cone-check", "--field", "f.bin", "--rho", "0.5"]);
    assert_eq!(grid_cone.status.code(), Some(0));
    assert_eq!(run(dir.path(), &["cone-check", "--field", "f.bin"]).status.code(), Some(2));

    let bd = run(dir.path(), &["blowdown", "--profile", "p.csv", "--t-grid=-2:-12:6", "--grad-tol", "1e-2", "--out", "bd.csv"]);
    assert_eq!(bd.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("bd.csv")).unwrap();
    assert!(csv.starts_with("t,r_min,r_max,sup_err,grad_err\n"));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bd.json")).unwrap()).unwrap();
    assert!(summary.get("alpha_fit").is_some() && summary.get("ratio_max").is_some());
}
