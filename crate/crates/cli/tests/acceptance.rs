//! Acceptance criteria for the library and the command-line tool, one
//! PASS/FAIL line each. Exits nonzero when any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nb2_core::derivatives::{obs_score_theta, score_beta};
use nb2_core::estimator::{fit, FitOptions, FitResult};
use nb2_core::fisher::InfoKind;
use nb2_core::identity::{
    check_all, default_grid, Expectation, IdentityId, IdentityTolerances, DISAGREEMENT_THRESHOLD,
};
use nb2_core::mixture::simulate_regression;
use nb2_core::model::{nb_pmf, tail_cutoff, DEFAULT_EPS_TAIL};
use nb2_core::verify::{self, seeded_instance};
use nb2_core::{loglik, loglik_alpha, DMatrix, Dataset, Params};
use rayon::prelude::*;

const TRUE_BETA: [f64; 2] = [0.5, -0.3];
const TRUE_THETA: f64 = 0.8;
const RECOVERY_N: usize = 5000;
const RECOVERY_SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        out.detail.push_str(&format!("; {:.3}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()));
        out.pass &= elapsed < limit;
    } else {
        out.detail.push_str(&format!("; {:.3}s", elapsed.as_secs_f64()));
    }
    out
}

fn identities() -> Outcome {
    let reports = check_all(&default_grid(), IdentityTolerances::default());
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &reports {
        pass &= r.expected_pairs_hold();
        let held =
            r.pairs.iter().filter(|p| p.expectation == Expectation::Holds).map(|p| p.max_residual).fold(0.0, f64::max);
        let mut part = format!("{:?} max held residual {held:.2e}", r.identity);
        if matches!(r.identity, IdentityId::DigammaChain | IdentityId::TrigammaChain) {
            let flagged = r.pair("b-c").map_or(0.0, |p| p.max_residual);
            pass &= flagged > DISAGREEMENT_THRESHOLD;
            part.push_str(&format!(", b-c disagreement {flagged:.3e}"));
        }
        parts.push(part);
    }
    outcome(pass, parts.join("; "))
}

fn derivatives() -> Outcome {
    match verify::derivative_suite(200, verify::VerifyConfig::default().seed) {
        Ok(s) => outcome(s.holds, format!("{} instances, worst {:?}", s.instances, s.worst)),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn sweep_line(s: &verify::Sweep) -> String {
    format!("{}: {} points, max residual {:.2e} (tol {:.0e})", s.name, s.points.len(), s.max_residual, s.tol)
}

fn mixture() -> Outcome {
    match verify::mixture_sweep() {
        Ok(s) => outcome(s.holds, sweep_line(&s)),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn mean_and_binomial() -> Outcome {
    match (verify::mean_sweep(DEFAULT_EPS_TAIL), verify::binomial_sweep()) {
        (Ok(m), Ok(b)) => outcome(m.holds && b.holds, format!("{}; {}", sweep_line(&m), sweep_line(&b))),
        (Err(e), _) | (_, Err(e)) => outcome(false, e.to_string()),
    }
}

fn fisher() -> Outcome {
    let sweep = match verify::fisher_sweep(DEFAULT_EPS_TAIL) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let ds = simulate_regression(&TRUE_BETA, TRUE_THETA, 500, 11).expect("simulated data");
    let opts = FitOptions { info_kind: InfoKind::Expected, ..Default::default() };
    let used = fit(&ds, &opts).ok().and_then(|r| r.info.truncation.map(|t| t.convention));
    let pass =
        sweep.holds && sweep.all_positive && sweep.matching_convention.is_some() && used == sweep.matching_convention;
    outcome(
        pass,
        format!(
            "max relative error {:.2e}, matching convention {:?}, estimator uses {:?}, all positive {}",
            sweep.max_relative_error, sweep.matching_convention, used, sweep.all_positive
        ),
    )
}

/// Pmf-weighted θ- and β-scores of a single observation with mean λ.
fn expected_scores(lambda: f64, theta: f64) -> nb2_core::Result<(f64, f64)> {
    let alpha = 1.0 / theta;
    let top = tail_cutoff(lambda, alpha, 1e-14)?.cutoff;
    let params = Params::from_slice(&[lambda.ln()], theta)?;
    let mut e_theta = 0.0;
    let mut e_beta = 0.0;
    for y in 0..=top {
        let p = nb_pmf(y, lambda, alpha)?;
        let ds = Dataset::new(vec![y], DMatrix::from_element(1, 1, 1.0), vec!["c".into()])?;
        e_theta += p * obs_score_theta(y, lambda, theta);
        e_beta += p * score_beta(&ds, &params)?[0];
    }
    Ok((e_theta, e_beta))
}

fn zero_mean_scores() -> Outcome {
    let mut worst: f64 = 0.0;
    for &lambda in &[0.2, 0.5, 1.0, 5.0, 20.0] {
        for &theta in &[0.1, 0.5, 1.0, 2.0, 10.0] {
            match expected_scores(lambda, theta) {
                Ok((t, b)) => worst = worst.max(t.abs()).max(b.abs()),
                Err(e) => return outcome(false, e.to_string()),
            }
        }
    }
    outcome(worst < 1e-8, format!("largest |expected score| {worst:.2e} (tol 1e-8)"))
}

fn sd(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn recovery() -> Outcome {
    let ds = simulate_regression(&TRUE_BETA, TRUE_THETA, RECOVERY_N, RECOVERY_SEED).expect("simulated data");
    let start = Instant::now();
    let r = match fit(&ds, &FitOptions::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let truth = [TRUE_BETA[0], TRUE_BETA[1], TRUE_THETA];
    let est = [r.beta_hat[0], r.beta_hat[1], r.theta_hat];
    let se = r.se.clone().unwrap_or_default();
    let z: Vec<f64> = (0..3).map(|k| (est[k] - truth[k]) / se.get(k).copied().unwrap_or(f64::NAN)).collect();
    let mut pass =
        r.converged && r.iterations < 50 && elapsed < Duration::from_secs(2) && z.iter().all(|z| z.abs() < 3.0);
    let mut detail = format!(
        "seed {RECOVERY_SEED}: {} iterations, {:.3}s, z = [{:.2}, {:.2}, {:.2}]",
        r.iterations,
        elapsed.as_secs_f64(),
        z[0],
        z[1],
        z[2]
    );

    let fits: Vec<FitResult> = match (1..=200u64)
        .into_par_iter()
        .map(|seed| {
            let ds = simulate_regression(&TRUE_BETA, TRUE_THETA, RECOVERY_N, seed)?;
            fit(&ds, &FitOptions::default())
        })
        .collect::<nb2_core::Result<Vec<_>>>()
    {
        Ok(f) => f,
        Err(e) => return outcome(false, e.to_string()),
    };
    pass &= fits.iter().all(|f| f.converged && f.se.is_some());
    let mut ratios = Vec::new();
    for k in 0..3 {
        let ests: Vec<f64> = fits.iter().map(|f| if k < 2 { f.beta_hat[k] } else { f.theta_hat }).collect();
        let mean_se = fits.iter().filter_map(|f| f.se.as_ref().map(|s| s[k])).sum::<f64>() / fits.len() as f64;
        let ratio = mean_se / sd(&ests);
        pass &= (ratio - 1.0).abs() <= 0.2;
        ratios.push(format!("{ratio:.3}"));
    }
    detail.push_str(&format!("; 200 seeds, mean SE / empirical SD = [{}]", ratios.join(", ")));
    outcome(pass, detail)
}

fn reparameterization() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let (ds, params) = match seeded_instance(RECOVERY_SEED, k) {
            Ok(v) => v,
            Err(e) => return outcome(false, e.to_string()),
        };
        match (loglik(&ds, &params), loglik_alpha(&ds, params.alpha(), params.beta())) {
            (Ok(a), Ok(b)) => worst = worst.max((a - b).abs() / a.abs().max(1.0)),
            (Err(e), _) | (_, Err(e)) => return outcome(false, e.to_string()),
        }
    }
    outcome(worst < 1e-10, format!("100 instances, largest relative difference {worst:.2e} (tol 1e-10)"))
}

fn run_nb2(args: &[&str]) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_nb2")).args(args).output().expect("nb2 runs");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn cli_pipeline() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let d = dir.path();
    let (data_a, data_b) = (d.join("a.csv"), d.join("b.csv"));
    let (fit_a, fit_b) = (d.join("fit_a.json"), d.join("fit_b.json"));
    let (ver_a, ver_b) = (d.join("verify_a.json"), d.join("verify_b.json"));
    let sim = |out: &Path| {
        run_nb2(&[
            "simulate",
            "--beta",
            "0.5,-0.3",
            "--theta",
            "0.8",
            "--n",
            "5000",
            "--seed",
            "42",
            "--output",
            path(out),
        ])
        .0
    };
    let fitc = |inp: &Path, out: &Path| run_nb2(&["fit", "--input", path(inp), "--output", path(out)]).0;
    let ver = |out: &Path| run_nb2(&["verify", "--output", path(out)]).0;

    let codes = [sim(&data_a), sim(&data_b), fitc(&data_a, &fit_a), fitc(&data_a, &fit_b), ver(&ver_a), ver(&ver_b)];
    let read = |p: &Path| std::fs::read(p).unwrap_or_default();
    let deterministic = read(&data_a) == read(&data_b) && read(&fit_a) == read(&fit_b) && read(&ver_a) == read(&ver_b);
    let converged = serde_json::from_slice::<serde_json::Value>(&read(&fit_a))
        .map(|v| v["fit"]["converged"] == true)
        .unwrap_or(false);

    let bad = d.join("bad.csv");
    std::fs::write(&bad, "y,x1\n1,0.5\n2.5,1\n").expect("write");
    let input_error = run_nb2(&["fit", "--input", path(&bad)]).0;
    let not_converged = run_nb2(&["fit", "--input", path(&data_a), "--max-iter", "1"]).0;
    let verify_failed = run_nb2(&["verify", "--tol-first", "1e-14"]).0;

    let pass = codes.iter().all(|&c| c == 0)
        && deterministic
        && converged
        && input_error == 1
        && not_converged == 2
        && verify_failed == 3;
    outcome(
        pass,
        format!(
            "pipeline exit codes {codes:?}, byte-identical reruns {deterministic}, \
             exit codes input {input_error} / non-convergence {not_converged} / verification {verify_failed}"
        ),
    )
}

type Criterion = (&'static str, Box<dyn FnOnce() -> Outcome>);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 identity adjudication", Box::new(|| timed(Some(Duration::from_secs(5)), identities))),
        ("2 derivative correctness", Box::new(|| timed(Some(Duration::from_secs(30)), derivatives))),
        ("3 gamma mixture pmf", Box::new(|| timed(Some(Duration::from_secs(10)), mixture))),
        ("4 truncated mean and binomial form", Box::new(|| timed(None, mean_and_binomial))),
        ("5 expected theta information", Box::new(|| timed(None, fisher))),
        ("6 zero-mean scores", Box::new(|| timed(None, zero_mean_scores))),
        ("7 recovery at n=5000", Box::new(|| timed(None, recovery))),
        ("8 theta/alpha reparameterization", Box::new(|| timed(None, reparameterization))),
        ("9 command-line pipeline", Box::new(|| timed(None, cli_pipeline))),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let out = check();
        if !out.pass {
            failures += 1;
        }
        println!("{} criterion {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
