use nb2_core::estimator::{fit, FitOptions};
use nb2_core::fisher::information;
use nb2_core::identity::IdentityTolerances;
use nb2_core::mixture::simulate_regression;
use nb2_core::verify::{self, VerifyConfig};
use nb2_core::Params;

use crate::args::{FitArgs, InfoArgs, SimulateArgs, VerifyArgs};
use crate::error::{CliError, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_VERIFY_FAILED};
use crate::io::{emit, ingest_csv, parse_grid, write_dataset_csv};
use crate::render::{self, FitOutput, InfoOutput, VerifyOutput, SCHEMA_VERSION};

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be a positive number, got {v}")))
    }
}

fn echo_shape(path: &std::path::Path, n: usize, p: usize) {
    eprintln!("read {}: {n} rows, {p} design columns", path.display());
}

pub fn cmd_fit(args: &FitArgs) -> Result<u8, CliError> {
    let eps_tail = positive("eps-tail", args.eps_tail)?;
    if args.max_iter == 0 {
        return Err(CliError::Usage("--max-iter must be at least 1".into()));
    }
    let ds = ingest_csv(&args.data.input, &args.data.response, args.data.no_intercept)?;
    echo_shape(&args.data.input, ds.n(), ds.p());
    let opts = FitOptions { max_iter: args.max_iter, info_kind: args.info.into(), eps_tail, ..Default::default() };
    let result = fit(&ds, &opts)?;
    let out = FitOutput::new(args.data.input.display().to_string(), ds.n(), &result);
    emit(args.out.output.as_deref(), render::fit(&out, args.out.format).as_bytes())?;
    if result.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("fit did not converge ({:?}); result written with converged = false", result.termination);
        Ok(EXIT_NOT_CONVERGED)
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<u8, CliError> {
    let theta = positive("theta", args.theta)?;
    if args.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let ds = simulate_regression(&args.beta, theta, args.n, args.seed)?;
    let mut buf = Vec::new();
    write_dataset_csv(&ds, &mut buf)?;
    emit(args.output.as_deref(), &buf)?;
    Ok(EXIT_OK)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<u8, CliError> {
    let defaults = VerifyConfig::default();
    let base = IdentityTolerances::default();
    let tolerances = IdentityTolerances {
        exact: args.tol_exact.map(|v| positive("tol-exact", v)).transpose()?.unwrap_or(base.exact),
        first: args.tol_first.map(|v| positive("tol-first", v)).transpose()?.unwrap_or(base.first),
        second: args.tol_second.map(|v| positive("tol-second", v)).transpose()?.unwrap_or(base.second),
    };
    let cfg = VerifyConfig {
        grid: match &args.grid {
            Some(spec) => parse_grid(spec)?,
            None => defaults.grid,
        },
        tolerances,
        eps_tail: positive("eps-tail", args.eps_tail)?,
        seed: args.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let report = verify::run(&cfg)?;
    let out = VerifyOutput {
        schema_version: SCHEMA_VERSION,
        command: "verify",
        all_expected_hold: report.all_expected_hold,
        report: &report,
    };
    emit(args.out.output.as_deref(), render::verify(&out, args.out.format).as_bytes())?;
    Ok(if report.all_expected_hold { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

pub fn cmd_info(args: &InfoArgs) -> Result<u8, CliError> {
    let theta = positive("theta", args.theta)?;
    let eps_tail = positive("eps-tail", args.eps_tail)?;
    let ds = ingest_csv(&args.data.input, &args.data.response, args.data.no_intercept)?;
    echo_shape(&args.data.input, ds.n(), ds.p());
    if args.beta.len() != ds.p() {
        return Err(CliError::Usage(format!(
            "--beta has {} entries but the design has {} columns ({})",
            args.beta.len(),
            ds.p(),
            ds.names().join(", ")
        )));
    }
    let params = Params::from_slice(&args.beta, theta)?;
    let matrices = args
        .info
        .kinds()
        .into_iter()
        .map(|kind| information(&ds, &params, kind, eps_tail))
        .collect::<Result<Vec<_>, _>>()?;
    let mut names = ds.names().to_vec();
    names.push("theta".into());
    let out = InfoOutput {
        schema_version: SCHEMA_VERSION,
        command: "info",
        input: args.data.input.display().to_string(),
        n: ds.n(),
        names,
        beta: args.beta.clone(),
        theta,
        matrices,
    };
    emit(args.out.output.as_deref(), render::info(&out, args.out.format).as_bytes())?;
    Ok(EXIT_OK)
}
