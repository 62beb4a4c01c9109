use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nb2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nb2")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn three_row_file_with_and_without_intercept() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "d.csv", "y,x1\n1,0.5\n0,-1.0\n4,2.0\n");
    let out = nb2(&["info", "--input", &input, "--beta", "0.1,0.2", "--theta", "0.5", "--info", "observed"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n"], 3);
    assert_eq!(v["names"], serde_json::json!(["(Intercept)", "x1", "theta"]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("3 rows, 2 design columns"));

    let out = nb2(&["info", "--input", &input, "--beta", "0.2", "--theta", "0.5", "--no-intercept"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["names"], serde_json::json!(["x1", "theta"]));
}

#[test]
fn ingest_errors_name_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("frac.csv", "y,x1\n1,0.5\n2.5,1.0\n", "line 3, column 1"),
        ("text.csv", "y,x1\n1,0.5\n2,abc\n", "line 3, column 2"),
        ("missing.csv", "count,x1\n1,0.5\n", "response column 'y' not found"),
        ("empty.csv", "", "empty"),
        ("header_only.csv", "y,x1\n", "no data rows"),
    ];
    for (name, body, needle) in cases {
        let input = write(dir.path(), name, body);
        let output = dir.path().join(format!("{name}.json"));
        let out = nb2(&["fit", "--input", &input, "--output", path_str(&output)]);
        assert_eq!(code(&out), 1, "{name}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{name}: {err}");
        assert!(!output.exists(), "{name}: output written on error");
    }
}

#[test]
fn simulate_rejects_bad_parameters() {
    assert_eq!(code(&nb2(&["simulate", "--beta", "0.1", "--theta", "0", "--n", "5", "--seed", "1"])), 1);
    assert_eq!(code(&nb2(&["simulate", "--beta", "0.1", "--theta", "1", "--n", "5"])), 1);
    assert_eq!(code(&nb2(&["bogus"])), 1);
    assert_eq!(code(&nb2(&["--help"])), 0);
}

#[test]
fn simulate_is_deterministic_and_large_sample_mean_is_right() {
    let a = nb2(&["simulate", "--beta", "0.3,-0.2", "--theta", "1.5", "--n", "200", "--seed", "9"]);
    let b = nb2(&["simulate", "--beta", "0.3,-0.2", "--theta", "1.5", "--n", "200", "--seed", "9"]);
    let c = nb2(&["simulate", "--beta", "0.3,-0.2", "--theta", "1.5", "--n", "200", "--seed", "10"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.csv");
    let lambda: f64 = 3.0;
    let beta = lambda.ln().to_string();
    let out = nb2(&[
        "simulate",
        "--beta",
        &beta,
        "--theta",
        "0.5",
        "--n",
        "1000000",
        "--seed",
        "5",
        "--output",
        path_str(&path),
    ]);
    assert_eq!(code(&out), 0);
    let body = std::fs::read_to_string(&path).unwrap();
    let ys: Vec<f64> = body.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(ys.len(), 1_000_000);
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let sd_mean = (lambda * (1.0 + 0.5 * lambda) / ys.len() as f64).sqrt();
    assert!((mean - lambda).abs() < 4.0 * sd_mean, "mean {mean}");
}

#[test]
fn fit_formats_carry_the_same_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert_eq!(
        code(&nb2(&[
            "simulate",
            "--beta",
            "0.5,-0.3",
            "--theta",
            "0.8",
            "--n",
            "2000",
            "--seed",
            "3",
            "--output",
            path_str(&data)
        ])),
        0
    );
    let json = nb2(&["fit", "--input", path_str(&data)]);
    assert_eq!(code(&json), 0);
    let v: Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["fit"]["converged"], true);

    let text = String::from_utf8(nb2(&["fit", "--input", path_str(&data), "--format", "text"]).stdout).unwrap();
    let csv = String::from_utf8(nb2(&["fit", "--input", path_str(&data), "--format", "csv"]).stdout).unwrap();
    for coef in v["coefficients"].as_array().unwrap() {
        let name = coef["name"].as_str().unwrap();
        let est = coef["estimate"].as_f64().unwrap();
        let line = text.lines().find(|l| l.starts_with(name)).unwrap();
        let shown: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!((shown - est).abs() <= 5e-12 * est.abs(), "{name}: {shown} vs {est}");
        let row = csv.lines().find(|l| l.starts_with(name)).unwrap();
        let shown: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((shown - est).abs() <= 5e-12 * est.abs());
        let se = coef["se"].as_f64().unwrap();
        assert!((coef["z"].as_f64().unwrap() - est / se).abs() < 1e-12 * (est / se).abs());
    }
}

#[test]
fn forced_non_convergence_exits_two_with_payload() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let out_path = dir.path().join("fit.json");
    nb2(&[
        "simulate",
        "--beta",
        "0.5,-0.3",
        "--theta",
        "0.8",
        "--n",
        "1000",
        "--seed",
        "4",
        "--output",
        path_str(&data),
    ]);
    let out = nb2(&["fit", "--input", path_str(&data), "--max-iter", "1", "--output", path_str(&out_path)]);
    assert_eq!(code(&out), 2);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["fit"]["converged"], false);
}

#[test]
fn expected_info_reports_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    nb2(&["simulate", "--beta", "0.2,0.4", "--theta", "1.1", "--n", "50", "--seed", "2", "--output", path_str(&data)]);
    let out = nb2(&["info", "--input", path_str(&data), "--beta", "0.2,0.4", "--theta", "1.1", "--info", "expected"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let m = &v["matrices"][0];
    assert_eq!(m["kind"], "EXPECTED");
    assert_eq!(m["truncation"]["convention"], "AT_LEAST_J_PLUS_ONE");
    assert_eq!(m["truncation"]["entries"].as_array().unwrap().len(), 50);

    let out = nb2(&["info", "--input", path_str(&data), "--beta", "0.2,0.4", "--theta", "1.1", "--info", "observed"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v["matrices"][0]["matrix"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.as_array().unwrap().iter().enumerate() {
            assert_eq!(v, &rows[j][i]);
        }
    }
    assert_eq!(code(&nb2(&["info", "--input", path_str(&data), "--beta", "0.2"])), 1);
    assert_eq!(code(&nb2(&["info", "--input", path_str(&data), "--beta", "0.2", "--theta", "1"])), 1);
}

#[test]
fn verify_grid_and_tolerance_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("v.json");
    let out = nb2(&["verify", "--grid", "0/1", "--output", path_str(&report)]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for id in v["report"]["identities"].as_array().unwrap() {
        for pt in id["points"].as_array().unwrap() {
            for r in pt["residuals"].as_array().unwrap() {
                assert_eq!(r[1].as_f64().unwrap(), 0.0);
            }
        }
    }

    let out = nb2(&["verify", "--tol-first", "1e-14", "--output", path_str(&report)]);
    assert_eq!(code(&out), 3);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["all_expected_hold"], false);

    assert_eq!(code(&nb2(&["verify", "--grid", "0,1"])), 1);
}

#[test]
fn thread_count_variable_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_nb2"))
        .args(["verify", "--grid", "1/1", "--format", "csv"])
        .env("NB2_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let out = Command::new(env!("CARGO_BIN_EXE_nb2"))
        .args(["verify", "--grid", "1/1"])
        .env("NB2_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}
