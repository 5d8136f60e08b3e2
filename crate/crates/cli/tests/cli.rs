use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ksol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksol"))
        .args(args)
        .env_remove("KSOL_JOBS")
        .output()
        .expect("spawn ksol")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json_of(out: &Output) -> Value {
    assert_eq!(code(out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn params(n: &str, k: &str, rho: &str) -> Vec<String> {
    ["--n", n, "--k", k, &format!("--rho={rho}"), "--theta", "1", "--alpha", "1"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn run(cmd: &str, p: &[String], extra: &[&str]) -> Output {
    let mut args: Vec<&str> = vec![cmd];
    args.extend(p.iter().map(String::as_str));
    args.extend(extra);
    ksol(&args)
}

#[test]
fn classify_expander_is_type_gamma() {
    let report = json_of(&ksol(&["classify", "--n", "4", "--k", "1", "--rho", "-1", "--theta", "1", "--alpha", "1"]));
    assert_eq!(report["class"]["kind"], "TypeGamma");
    for key in ["config", "params", "derived", "class", "events", "tail", "residuals", "monitors"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["config"]["rho"], -1.0);
    assert_eq!(report["monitors"]["violations"], 0);
    assert!(report["residuals"]["elliptic"]["max_rel"].as_f64().unwrap() < 1e-6);
}

#[test]
fn classify_below_critical_dimension_is_non_admissible() {
    let report = json_of(&run("classify", &params("3", "2", "1"), &[]));
    assert_eq!(report["class"]["kind"], "NonAdmissible");
    assert!(report["class"]["s_exit"].as_f64().unwrap().is_finite());
}

#[test]
fn usage_errors_exit_2() {
    let out = ksol(&["classify", "--n", "4", "--k", "1", "--rho", "-1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta"));
    assert_eq!(code(&ksol(&["classify", "--n", "4", "--k", "1", "--rho", "-3", "--theta", "1"])), 2);
    assert_eq!(code(&ksol(&["classify", "--n", "2", "--k", "1", "--rho", "0", "--theta", "1"])), 2);
    assert_eq!(code(&ksol(&["classify", "--bogus"])), 2);
    assert_eq!(code(&ksol(&["classify", "--n", "4", "--k", "1", "--rho", "0", "--theta", "1", "--alpha", "0"])), 2);
}

#[test]
fn config_file_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# expander\nn = 4\nk = 1\nrho = 1\ntheta = 1\ns-max = 300\n").unwrap();
    let c = cfg.to_str().unwrap();
    let report = json_of(&ksol(&["classify", "--config", c]));
    assert_eq!(report["class"]["kind"], "TypeB");
    assert_eq!(report["config"]["s_max"], 300.0);
    // flag beats file
    let report = json_of(&ksol(&["classify", "--config", c, "--rho=-1"]));
    assert_eq!(report["class"]["kind"], "TypeGamma");
    assert_eq!(report["config"]["rho"], -1.0);

    std::fs::write(&cfg, "n = 4\nwidth = 3\n").unwrap();
    assert_eq!(code(&ksol(&["classify", "--config", c])), 2);
    let missing = dir.path().join("absent.cfg");
    assert_eq!(code(&ksol(&["classify", "--config", missing.to_str().unwrap()])), 2);
}

#[test]
fn classify_csv_row() {
    let out = run("classify", &params("4", "1", "1"), &["--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("n,k,rho,theta,alpha,kind"));
    assert!(lines[1].contains(",TypeB,"));
    assert!(!text.contains('\r'));
}

#[test]
fn profile_table_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    for (n, k, rho) in [("4", "1", "-1"), ("4", "1", "1"), ("4", "2", "1")] {
        let path = dir.path().join(format!("u_{n}_{k}_{rho}.csv"));
        let out = run("profile", &params(n, k, rho), &["--output", path.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'));
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "r,u,u_r,u_rr,lambda1,lambda2,sigma_k");
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert!(rows.len() >= 100, "{} rows", rows.len());
        for r in &rows {
            assert_eq!(r.len(), 7);
            assert!(r[6] > 0.0, "sigma_k {} at r = {}", r[6], r[0]);
            assert!(r[1] > 0.0 && r[2] <= 0.0);
        }
        let side = read_json(&path.with_extension("json"));
        assert_eq!(side["rows_written"].as_u64().unwrap() as usize, rows.len());
        assert!(side["residuals"]["elliptic"]["max_rel"].as_f64().unwrap() < 1e-6);
        assert_eq!(side["config"]["command"], "profile");
    }
}

fn portrait(n: &str, k: &str, rho: &str) -> Vec<Vec<String>> {
    let out = run("portrait", &params(n, k, rho), &["--grid", "11", "--orbits", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "kind,id,label,x,z,u,v,note");
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn portrait_contents() {
    let rows = portrait("4", "1", "1");
    let of = |kind: &str| rows.iter().filter(|r| r[0] == kind).collect::<Vec<_>>();
    assert_eq!(of("field").len(), 121);
    let crit = of("critical");
    let labels: Vec<&str> = crit.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(labels, ["O", "A", "B"]);
    // B = (X_B, Z_B) = (3, 1) for (4, 1, 1, 1)
    let b = crit[2];
    assert!((b[3].parse::<f64>().unwrap() - 3.0).abs() < 1e-12);
    assert!((b[4].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    assert!(b[7].ends_with("interior"));
    // Z_s = 0 is Z = 0 and the vertical X = X_B
    let nz = of("nullcline_z");
    assert!(nz.iter().filter(|r| r[1] == "0").all(|r| r[4] == "0.0"));
    assert!(nz.iter().filter(|r| r[1] == "1").all(|r| r[3] == "3.0"));
    // on the X_s = 0 branch the field is vertical
    for r in of("nullcline_x").iter().step_by(10) {
        let (x, z): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        // a = 1/6, f(x) = c beta (gamma - x) = 2 (4.5 - x)
        let xs = -2.0 * (1.0 - x / 6.0) * x + z * 2.0 * (4.5 - x);
        assert!(xs.abs() < 1e-9 * (1.0 + x), "X_s = {xs} at ({x}, {z})");
    }
    let ids: std::collections::BTreeSet<&str> = of("orbit").iter().map(|r| r[1].as_str()).collect();
    assert_eq!(ids.len(), 4);
}

#[test]
fn expander_portrait_has_no_interior_critical_point() {
    for (n, k) in [("4", "1"), ("5", "2")] {
        let rows = portrait(n, k, "-1");
        let crit: Vec<_> = rows.iter().filter(|r| r[0] == "critical").collect();
        assert!(!crit.is_empty());
        assert!(crit.iter().all(|r| !r[7].ends_with("interior")), "({n},{k})");
    }
}

#[test]
fn verify_passes_across_regimes() {
    for (n, k, rho) in [("4", "1", "-1"), ("4", "1", "0"), ("4", "1", "1"), ("4", "2", "-1"), ("4", "2", "0"), ("4", "2", "1")] {
        let out = run("verify", &params(n, k, rho), &[]);
        let report: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(code(&out), 0, "({n},{k}) rho={rho}: {}", report["failed"]);
        assert_eq!(report["pass"], true);
        let checks = report["checks"].as_array().unwrap();
        assert!(checks.len() >= 12);
        for c in checks {
            assert!(c["slack"].as_f64().unwrap() >= 0.0, "{c}");
        }
    }
}

#[test]
fn injected_perturbation_fails_verification() {
    let out = run("verify", &params("4", "1", "1"), &["--inject-perturbation"]);
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], false);
    assert_eq!(report["failed"], serde_json::json!(["monotonicity_violations"]));
}

fn sweep(extra: &[&str], jobs: &str) -> String {
    let mut args = vec!["sweep", "--n", "4", "--k", "1", "--theta", "1"];
    args.extend(extra);
    let out = Command::new(env!("CARGO_BIN_EXE_ksol"))
        .args(&args)
        .env("KSOL_JOBS", jobs)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn sweep_reproduces_regime_table_deterministically() {
    let a = sweep(&["--rhos", "-1,0,1", "--alphas", "0.5,1,2"], "4");
    let b = sweep(&["--rhos", "-1,0,1", "--alphas", "0.5,1,2"], "1");
    assert_eq!(a, b);
    let mut lines = a.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[col("index")], i.to_string());
        let want = if r[col("rho")].starts_with('-') || r[col("rho")] == "0.0" { "TypeGamma" } else { "TypeB" };
        assert_eq!(r[col("kind")], want, "row {i}");
        assert!(r[col("error")].is_empty());
    }
}

#[test]
fn shrinker_sweep_carries_both_dichotomy_columns() {
    let out = sweep(&["--ratios", "3,5", "--format", "json"], "2");
    let v: Value = serde_json::from_str(&out).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(v["config"]["rhos"], serde_json::json!([3.0, 5.0]));
    for r in rows {
        assert!(r.get("type_a").is_some() && r.get("type_b").is_some());
        assert_eq!(r["type_a"].as_u64().unwrap() + r["type_b"].as_u64().unwrap(), 1);
    }
}

#[test]
fn sweep_rejects_bad_grid() {
    let out = ksol(&["sweep", "--n", "4", "--k", "1", "--theta", "1", "--rhos", "-5"]);
    assert_eq!(code(&out), 2);
    let out = ksol(&["sweep", "--n", "4", "--k", "1", "--theta", "1", "--rhos", "1", "--ratios", "1"]);
    assert_eq!(code(&out), 2);
}
