use std::path::Path;
use std::process::{Command, Output};

fn snnsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snnsel")).args(args).output().expect("run snnsel")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every row selected with `y = x1 + 3`, so `W` is 3 everywhere once β = 1.
fn constant_w_file(dir: &Path) -> String {
    let path = dir.join("const.csv");
    let mut text = String::from("y,d,x1,z1,z2\n");
    for i in 0..120 {
        let x1 = (i as f64 * 0.37).sin() * 2.0;
        let z2 = (i as f64 * 0.71).cos();
        text += &format!("{},1,{x1},{x1},{z2}\n", x1 + 3.0);
    }
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn estimate_recovers_constant_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let data = constant_w_file(dir.path());
    let out = snnsel(&[
        "estimate", "--data", &data, "--x", "x1", "--z", "z1,z2", "--beta", "1", "--gamma", "1,0.5",
        "--bandwidth", "fixed:0.3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    let theta: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((theta - 3.0).abs() < 1e-10, "{row}");
}

#[test]
fn missing_column_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = constant_w_file(dir.path());
    let out = snnsel(&["estimate", "--data", &data, "--x", "x9", "--z", "z1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("missing column: x9"), "{}", stderr(&out));
}

#[test]
fn unknown_estimator_lists_choices() {
    let out = snnsel(&["mc-table", "--dgp", "dgp1", "--n", "100", "--estimator", "lasso"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    for name in ["snn", "ols", "heckman", "h90", "as98"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn bad_bandwidth_is_a_usage_error() {
    let out = snnsel(&["mc-table", "--dgp", "dgp1", "--n", "100", "--bandwidth", "fixed:2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mc_table_output_does_not_depend_on_workers() {
    let run = |workers: &str| {
        let out = snnsel(&[
            "mc-table", "--dgp", "dgp2", "--n", "100", "--reps", "60", "--rho", "0,0.5", "--alpha", "2,1",
            "--estimator", "snn,ols,heckman,h90,as98", "--format", "json", "--workers", workers,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        stdout(&out)
    };
    assert_eq!(run("1"), run("8"));
}

#[test]
fn simulate_round_trips_through_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.csv");
    let path = path.to_str().unwrap();
    let out = snnsel(&["simulate", "--dgp", "dgp1", "--n", "400", "--rho", "0.5", "--seed", "7", "--out", path]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = snnsel(&[
        "estimate", "--data", path, "--x", "x1,x2,x3,x4", "--z", "z1,z2,z3,z4,z5,z6,z7", "--estimator",
        "snn,ols,heckman,h90,as98", "--format", "json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 5);
    for r in rows.as_array().unwrap() {
        assert!(r["theta"].as_f64().unwrap().is_finite(), "{r}");
    }
}

#[test]
fn simulate_latent_columns() {
    let out = snnsel(&["simulate", "--dgp", "dgp2", "--n", "5", "--alpha", "1.5", "--latent"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("y,d,x1,x2,x3,x4,z1,z2,z3,z4,z5,z6,z7,u,v,index\n"), "{text}");
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn rate_check_slope_near_target() {
    let out = snnsel(&["rate-check", "--reps", "400", "--workers", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let slope: f64 = row[2].parse().unwrap();
    let target: f64 = row[3].parse().unwrap();
    assert!((target + 0.4).abs() < 1e-12);
    assert!((slope - target).abs() <= 0.1, "slope {slope}");
}

#[test]
fn rate_check_rejects_baselines() {
    let out = snnsel(&["rate-check", "--estimator", "h90"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn kernel_check_moments() {
    let out = snnsel(&["kernel-check", "--kernel-order", "2", "--format", "json"]);
    assert!(out.status.success());
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let value = |name: &str| {
        rows.as_array().unwrap().iter().find(|r| r["quantity"] == name).unwrap()["value"].as_f64().unwrap()
    };
    assert!((value("moment_0") - 1.0).abs() < 1e-8);
    assert!(value("moment_1").abs() < 1e-8);
    assert!((value("moment_2") - 0.2).abs() < 1e-8);
    assert!((value("l2") - 0.6).abs() < 1e-8);
}

#[test]
fn ident_check_grows_near_one() {
    let out = snnsel(&["ident-check", "--dgp", "dgp1", "--alpha", "0.5", "--q", "0.5,0.999999"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let ratios: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(ratios[1] > 100.0 * ratios[0], "{text}");
}

#[test]
fn decompose_two_groups() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("y,d,x1,z1,z2,g\n");
    for g in 0..2 {
        let sim = snnsel(&["simulate", "--dgp", "dgp1", "--n", "300", "--seed", &(11 + g).to_string()]);
        for line in stdout(&sim).lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            // y, d, x1, z1 (= x1), z5
            text += &format!("{},{},{},{},{},{g}\n", f[0], f[1], f[2], f[6], f[10]);
        }
    }
    let path = dir.path().join("groups.csv");
    std::fs::write(&path, text).unwrap();
    let out = snnsel(&[
        "decompose", "--data", path.to_str().unwrap(), "--x", "x1", "--z", "z1,z2", "--group", "g", "--estimator",
        "ols", "--bootstrap", "10",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = stdout(&out);
    assert_eq!(csv.lines().count(), 10, "{csv}");
    let get = |q: &str| -> f64 {
        csv.lines().find(|l| l.split(',').nth(1) == Some(q)).unwrap().split(',').nth(2).unwrap().parse().unwrap()
    };
    let sum = get("component_a") + get("component_b") + get("component_c");
    assert!((sum - get("gap_overall")).abs() < 1e-10);
}
