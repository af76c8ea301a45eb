//! End-to-end checks of the `coda` binary: exit codes, report files, and
//! determinism given a fixed seed.

use std::process::Command;

fn coda() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coda"))
}

#[test]
fn missing_dist_is_usage_error() {
    let out = coda().args(["lsd", "--n", "50", "--p", "50", "--out", "/tmp/x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_complex_literal_is_usage_error() {
    let out = coda()
        .args(["resolvent", "--dist", "exp:5", "--n", "50", "--reps", "4", "--z", "3+2j"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reps_one_rejected() {
    let out = coda()
        .args(["lss", "--dist", "exp:5", "--n", "50", "--reps", "1", "--stats", "x"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lsd_run_writes_summary_with_support() {
    let dir = tempfile::tempdir().unwrap();
    let out = coda()
        .args(["lsd", "--dist", "exp:5", "--n", "60", "--p", "60", "--bins", "20"])
        .args(["--seed", "7", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    // lambda = 1, c ~ 60/59: support left edge near 0, point mass 0
    assert!(summary["support"][0].as_f64().unwrap() < 0.01);
    assert!((summary["support"][1].as_f64().unwrap() - 4.0).abs() < 0.15);
    assert_eq!(summary["point_mass"].as_f64().unwrap(), 0.0);
    assert!(dir.path().join("histogram.csv").exists());
    assert!(dir.path().join("density.csv").exists());
}

#[test]
fn lsd_point_mass_at_c_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = coda()
        .args(["lsd", "--dist", "exp:5", "--n", "40", "--p", "80", "--seed", "3"])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    let pm = summary["point_mass"].as_f64().unwrap();
    // c = 80/40 = 2, mass 1 - 1/c = 1/2
    assert!((pm - 0.5).abs() < 1e-12);
}

#[test]
fn lss_theoretical_columns_and_determinism() {
    let run = || {
        let out = coda()
            .args(["lss", "--dist", "chisq:1", "--ratio", "3/4", "--n", "40"])
            .args(["--reps", "8", "--stats", "x,x2,x3", "--seed", "11", "--workers", "2"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let first = run();
    assert_eq!(first, run());
    let report: serde_json::Value = serde_json::from_str(&first).unwrap();
    let rows = report["rows"].as_array().unwrap();
    let theo: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r["theo_mean"].as_f64().unwrap(), r["theo_var"].as_f64().unwrap()))
        .collect();
    assert!((theo[0].0 + 6.0).abs() < 1e-9 && (theo[0].1 - 18.0).abs() < 1e-8);
    assert!((theo[1].0 + 23.0).abs() < 1e-9 && (theo[1].1 - 918.0).abs() < 1e-7);
    assert!((theo[2].0 + 83.0).abs() < 1e-8 && (theo[2].1 - 41806.12).abs() < 0.05);
}

#[test]
fn config_file_with_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"dist": "exp:5", "ratio": "1", "n": "40", "reps": 4, "stats": "x", "seed": 5}"#,
    )
    .unwrap();
    let from_cfg = coda()
        .args(["lss", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(from_cfg.status.success(), "{}", String::from_utf8_lossy(&from_cfg.stderr));
    // flag overrides the config's basis
    let overridden = coda()
        .args(["lss", "--config", cfg.to_str().unwrap(), "--dist", "chisq:1"])
        .output()
        .unwrap();
    assert!(overridden.status.success());
    let a: serde_json::Value = serde_json::from_slice(&from_cfg.stdout).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&overridden.stdout).unwrap();
    assert_eq!(a["basis"], "exp:5");
    assert_eq!(b["basis"], "chisq:1");
}

#[test]
fn seed_env_var_used_as_default() {
    let run = |env: Option<&str>| {
        let mut cmd = coda();
        cmd.args(["lss", "--dist", "exp:5", "--n", "30", "--reps", "4", "--stats", "x"]);
        cmd.env_remove("CODA_SEED");
        if let Some(s) = env {
            cmd.env("CODA_SEED", s);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()["seed"]
            .as_u64()
            .unwrap()
    };
    assert_eq!(run(Some("123")), 123);
    assert_eq!(run(None), 42);
}

#[test]
fn resolvent_reports_theory_columns() {
    let out = coda()
        .args(["resolvent", "--dist", "exp:5", "--ratio", "3/4", "--n", "60"])
        .args(["--reps", "8", "--z", "-3+2i", "--pairs", "(-3+2i,-1+1i)", "--seed", "2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mean = &report["points"][0]["theo_mean"];
    assert!((mean["re"].as_f64().unwrap() - 0.0587).abs() < 5e-3);
    assert!((mean["im"].as_f64().unwrap() - 0.0872).abs() < 5e-3);
    assert!(report["pairs"][0]["theo_cov"]["re"].is_f64());
}

#[test]
fn test_subcommand_null_data() {
    let dir = tempfile::tempdir().unwrap();
    // simulate under the null, write the compositions, test them
    let csv = dir.path().join("data.csv");
    {
        let w = coda::synth::sample_basis("exp:5".parse().unwrap(), 300, 300, 7).unwrap();
        let x = coda::synth::compose(&w).unwrap();
        coda::synth::write_csv(&x, &csv).unwrap();
    }
    let out = coda()
        .args(["test", "--input", csv.to_str().unwrap(), "--stat", "x2", "--dist", "exp:5"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["z_score"].as_f64().unwrap().abs() < 3.0);
    let p = report["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(report["moment_source"], "builtin");

    // user-supplied moments route: exp(5) moments spelled out
    let out2 = coda()
        .args(["test", "--input", csv.to_str().unwrap(), "--stat", "x2"])
        .args(["--moments", "mu=0.2,sigma2=0.04,m3=0.048,mu4c=0.0144"])
        .output()
        .unwrap();
    assert!(out2.status.success(), "{}", String::from_utf8_lossy(&out2.stderr));
    let report2: serde_json::Value = serde_json::from_slice(&out2.stdout).unwrap();
    assert_eq!(report2["moment_source"], "user_supplied");
    assert!(
        (report2["z_score"].as_f64().unwrap() - report["z_score"].as_f64().unwrap()).abs() < 1e-9
    );
}

#[test]
fn test_subcommand_detects_planted_spike() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("spiked.csv");
    {
        let w = coda::synth::sample_basis("exp:5".parse().unwrap(), 300, 300, 7).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..w.n)
            .map(|i| (0..w.p).map(|j| w.entries[(i, j)]).collect())
            .collect();
        for row in &mut rows {
            row[0] *= 5.0; // planted spike in the first component
        }
        let spiked = coda::synth::BasisMatrix::from_rows(rows).unwrap();
        let x = coda::synth::compose(&spiked).unwrap();
        coda::synth::write_csv(&x, &csv).unwrap();
    }
    let out = coda()
        .args(["test", "--input", csv.to_str().unwrap(), "--stat", "x2", "--dist", "exp:5"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["z_score"].as_f64().unwrap().abs() > 3.0);
}

#[test]
fn test_subcommand_requires_moment_source() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let w = coda::synth::sample_basis("exp:5".parse().unwrap(), 10, 10, 1).unwrap();
    let x = coda::synth::compose(&w).unwrap();
    coda::synth::write_csv(&x, &csv).unwrap();
    let out = coda()
        .args(["test", "--input", csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn theory_emits_constants() {
    let out = coda()
        .args(["theory", "--dist", "chisq:1", "--ratio", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["lambda"].as_f64().unwrap(), 2.0);
    assert_eq!(v["h1"].as_f64().unwrap(), -6.0);
    assert_eq!(v["h2"].as_f64().unwrap(), -56.0);
    let stats = v["stats"].as_array().unwrap();
    assert!((stats[1]["mean"].as_f64().unwrap() + 24.0).abs() < 1e-9);
    assert!((stats[1]["variance"].as_f64().unwrap() - 1600.0).abs() < 1e-7);
}
