use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn kjko(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kjko")).args(args).env_remove("KJKO_THREADS").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn heat_config(h: f64, t_end: f64) -> Value {
    json!({
        "n": 1, "d": 1,
        "grid": {"lo": [-6.5], "hi": [6.5], "cells": [256]},
        "potential": {"kind": "zero"},
        "initial": {"kind": "gaussian", "mean": [0.0], "variance": 0.5},
        "h": h, "t_end": t_end
    })
}

#[test]
fn identities_pass_up_to_six() {
    let out = kjko(&["identities", "--n-max", "6"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["all_passed"], json!(true));
    assert_eq!(r["orders"].as_array().unwrap().len(), 6);

    let one = kjko(&["identities", "--n-max", "1"]);
    assert_eq!(code(&one), 0);
}

#[test]
fn identity_self_test_catches_injected_errors() {
    let a = kjko(&["identities", "--n-max", "5", "--self-test", "--seed", "11"]);
    assert_eq!(code(&a), 0);
    let r = report(&a);
    assert_eq!(r["all_detected"], json!(true));
    for inj in r["injections"].as_array().unwrap() {
        assert!(!inj["failed_checks"].as_array().unwrap().is_empty());
    }
    let b = kjko(&["identities", "--n-max", "5", "--self-test", "--seed", "11"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn identities_reject_bad_orders() {
    assert_eq!(code(&kjko(&["identities", "--n-max", "0"])), 2);
    assert_eq!(code(&kjko(&["identities", "--n-max", "13"])), 2);
}

#[test]
fn order_one_cost_is_squared_distance() {
    let out = kjko(&["cost", "--n", "1", "--d", "2", "--t", "0.7", "--x", "0.5,-1", "--y", "-0.25,2"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    let expected = 0.75f64.powi(2) + 3.0f64.powi(2);
    assert!((f(&r["cost"]) - expected).abs() < 1e-12);
    assert!((f(&r["grad_x"][0]) - 1.5).abs() < 1e-12);
    assert!((f(&r["grad_y"][1]) - 6.0).abs() < 1e-12);
}

#[test]
fn free_flow_pair_costs_nothing() {
    // Order 2 in one dimension: position moves by t * velocity.
    let (t, p, v) = (0.8, 0.3, -1.25);
    let x = format!("{p},{v}");
    let y = format!("{},{v}", p + t * v);
    let out = kjko(&["cost", "--n", "2", "--t", &t.to_string(), "--x", &x, "--y", &y]);
    assert_eq!(code(&out), 0);
    assert!(f(&report(&out)["cost"]).abs() < 1e-12);
}

#[test]
fn random_cost_is_reproducible_and_within_tolerance() {
    let args = ["cost", "--n", "3", "--d", "2", "--random", "--seed", "5"];
    let a = kjko(&args);
    assert_eq!(code(&a), 0);
    let r = report(&a);
    assert_eq!(r["within_tolerance"], json!(true));
    assert!(f(&r["pde_residual"]).abs() <= f(&r["pde_tolerance"]));
    assert_eq!(a.stdout, kjko(&args).stdout);
    let other = kjko(&["cost", "--n", "3", "--d", "2", "--random", "--seed", "6"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn malformed_vectors_are_usage_errors() {
    for (x, y) in [("0.1,abc", "0,0"), ("0.1", "0,0"), ("0.1,nan", "0,0"), ("0,0", "")] {
        let out = kjko(&["cost", "--n", "2", "--t", "1", "--x", x, "--y", y]);
        assert_eq!(code(&out), 2, "x={x} y={y}");
    }
    assert_eq!(code(&kjko(&["cost", "--n", "2", "--t", "1"])), 2);
    assert_eq!(code(&kjko(&["cost", "--n", "2", "--t", "0", "--x", "0,0", "--y", "0,0"])), 2);
    assert_eq!(code(&kjko(&["cost", "--n", "2", "--bogus"])), 2);
}

#[test]
fn floats_are_written_with_seventeen_digits() {
    let out = kjko(&["cost", "--n", "1", "--t", "1", "--x", "0.1", "--y", "0"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"cost\": 1.0000000000000002e-2"), "{text}");
}

#[test]
fn kernel_constant_for_order_two() {
    let out = kjko(&["kernel", "--n", "2", "--d", "2", "--t", "1", "--x", "0.1,0.2,0.3,0.4"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    let expected = (3f64.sqrt() / (2.0 * std::f64::consts::PI)).powi(2);
    assert!((f(&r["beta"]) - expected).abs() < 1e-15);
    assert!(f(&r["phi"]) > 0.0 && f(&r["phi"]) <= f(&r["peak"]));
}

#[test]
fn normalize_check_order_one() {
    let out = kjko(&["kernel", "--n", "1", "--t", "0.3", "--y", "0.4", "--normalize-check"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    for row in r["normalization"]["rows"].as_array().unwrap() {
        assert!((f(&row["mass"]) - 1.0).abs() < 1e-10);
    }
}

#[test]
fn dirac_check_order_two() {
    let out = kjko(&["kernel", "--n", "2", "--t", "0.3", "--y", "0.2,-0.1", "--dirac-check"]);
    assert_eq!(code(&out), 0);
    let table = &report(&out)["dirac"]["table"];
    assert_eq!(table["monotone"], json!(true));
}

#[test]
fn nonpositive_time_is_a_usage_error() {
    for t in ["0", "-0.5"] {
        let out = kjko(&["kernel", "--n", "2", "--t", t]);
        assert_eq!(code(&out), 2);
        assert!(String::from_utf8_lossy(&out.stderr).contains("positive"));
    }
}

#[test]
fn heat_run_writes_snapshots_and_a_decreasing_table() {
    let dir = TempDir::new().unwrap();
    let mut cfg = heat_config(0.05, 0.5);
    cfg["convergence_h"] = json!([0.1, 0.05, 0.025]);
    let path = write_config(dir.path(), "heat.json", &cfg);
    let out_dir = dir.path().join("out");
    let out = kjko(&["jko", &path, "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, report(&out));
    assert_eq!(summary["steps"], json!(10));
    assert_eq!(summary["convergence"]["strictly_decreasing"], json!(true));
    assert!(f(&summary["monitors"]["max_energy_gap"]) <= 1e-7);
    assert!(f(&summary["monitors"]["final_mass_error"]) < 1e-9);
    assert_eq!(summary["equicontinuity"]["bounded"], json!(true));

    let snaps = summary["snapshots"].as_array().unwrap();
    assert_eq!(snaps.len(), 11);
    let csv = fs::read_to_string(out_dir.join(snaps[10]["file"].as_str().unwrap())).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,density"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 256);
    let mass: f64 = rows.iter().map(|(_, rho)| rho * 13.0 / 256.0).sum();
    assert!((mass - 1.0).abs() < 1e-9);
}

#[test]
fn final_time_below_step_runs_once() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "short.json", &heat_config(0.1, 0.03));
    let out = kjko(&["jko", &path, "--out-dir", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(report(&out)["steps"], json!(1));
}

#[test]
fn order_two_run_completes_with_bounded_monitors() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "n": 2, "d": 1,
        "grid": {"lo": [-4.0, -4.0], "hi": [4.0, 4.0], "cells": [20, 20]},
        "potential": {"kind": "zero"},
        "initial": {"kind": "gaussian", "mean": [0.0, 0.0], "variance": 0.5},
        "h": 0.1, "t_end": 0.3
    });
    let path = write_config(dir.path(), "n2.json", &cfg);
    let out = kjko(&["jko", &path, "--out-dir", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["equicontinuity"]["bounded"], json!(true));
    assert!(f(&r["monitors"]["max_corrected_energy_gap"]) <= 1e-7);
    assert!(f(&r["monitors"]["final_mass_error"]) < 1e-9);
    assert!(r["convergence"].is_null());
}

#[test]
fn missing_reference_is_noted_and_run_continues() {
    let dir = TempDir::new().unwrap();
    let mut cfg = heat_config(0.1, 0.2);
    cfg["potential"] =
        json!({"kind": "polynomial", "coefficients": [0.0, 0.0, 0.5, 0.0, 0.01], "gradient_lipschitz": 8.0});
    cfg["grid"]["cells"] = json!([128]);
    cfg["convergence_h"] = json!([0.1, 0.05]);
    let path = write_config(dir.path(), "poly.json", &cfg);
    let out = kjko(&["jko", &path, "--out-dir", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(r["convergence"].is_null());
    assert!(r["notes"][0].as_str().unwrap().contains("no analytic reference"));
    assert_eq!(r["steps"], json!(2));
}

#[test]
fn perturbed_start_is_seeded() {
    let dir = TempDir::new().unwrap();
    let mut cfg = heat_config(0.1, 0.1);
    cfg["grid"]["cells"] = json!([64]);
    cfg["initial"] = json!({"kind": "perturbed_gaussian", "mean": [0.0], "variance": 0.5, "amplitude": 0.3});
    cfg["equicontinuity"] = json!(false);
    let path = write_config(dir.path(), "noisy.json", &cfg);
    let run = |seed: &str, threads: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = Command::new(env!("CARGO_BIN_EXE_kjko"))
            .args(["jko", &path, "--seed", seed, "--out-dir", out_dir.to_str().unwrap()])
            .env("KJKO_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        (out.stdout, fs::read(out_dir.join("density_step00000.csv")).unwrap())
    };
    let a = run("3", "1", "a");
    let b = run("3", "4", "b");
    let c = run("4", "2", "c");
    assert_eq!(a, b);
    assert_ne!(a.1, c.1);
}

#[test]
fn invalid_configs_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out_dir = out_dir.to_str().unwrap();
    let mut bad = Vec::new();
    let mut cfg = heat_config(0.1, 0.5);
    cfg["typo"] = json!(1);
    bad.push(cfg);
    bad.push(heat_config(-0.1, 0.5));
    let mut cfg = heat_config(0.1, 0.5);
    cfg["grid"]["cells"] = json!([16, 16]);
    bad.push(cfg);
    let mut cfg = heat_config(0.1, 0.5);
    cfg["potential"] = json!({"kind": "cubic"});
    bad.push(cfg);
    let mut cfg = heat_config(0.1, 0.5);
    cfg["initial"]["mean"] = json!([0.0, 1.0]);
    bad.push(cfg);
    for (k, cfg) in bad.iter().enumerate() {
        let path = write_config(dir.path(), &format!("bad{k}.json"), cfg);
        assert_eq!(code(&kjko(&["jko", &path, "--out-dir", out_dir])), 2, "config {k}");
    }
    assert_eq!(code(&kjko(&["jko", "/nonexistent/run.json"])), 2);
    assert_eq!(code(&kjko(&["--threads", "0", "identities", "--n-max", "1"])), 2);
}
