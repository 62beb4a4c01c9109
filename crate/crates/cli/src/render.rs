//! JSON, aligned text and CSV renderings of command results.

use std::fmt::Write as _;

use nb2_core::fisher::{InfoKind, InfoMatrix};
use nb2_core::identity::{Expectation, Verdict};
use nb2_core::{FitResult, VerifyReport};
use serde::Serialize;

use crate::args::Format;

pub const SCHEMA_VERSION: u32 = 1;

/// `%.12g`-style formatting: 12 significant digits, trailing zeros dropped.
pub fn sig12(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    // Rounding to 12 digits can carry into the next decade.
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    let exp = if rounded.abs() >= 10f64.powi(exp + 1) { exp + 1 } else { exp };
    if !(-4..12).contains(&exp) {
        let s = format!("{v:.11e}");
        let (mantissa, e) = s.split_once('e').expect("scientific format");
        format!("{}e{}", trim_zeros(mantissa), e)
    } else {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), sig12)
}

#[derive(Debug, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct FitOutput<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub input: String,
    pub n: usize,
    pub p: usize,
    pub info_kind: InfoKind,
    pub coefficients: Vec<Coefficient>,
    pub fit: &'a FitResult,
}

impl<'a> FitOutput<'a> {
    pub fn new(input: String, n: usize, fit: &'a FitResult) -> Self {
        let estimates = fit.beta_hat.iter().copied().chain(std::iter::once(fit.theta_hat));
        let names = fit.names.iter().cloned().chain(std::iter::once("theta".to_string()));
        let coefficients = names
            .zip(estimates)
            .enumerate()
            .map(|(k, (name, estimate))| {
                let se = fit.se.as_ref().map(|s| s[k]);
                Coefficient { name, estimate, se, z: se.map(|s| estimate / s) }
            })
            .collect();
        FitOutput {
            schema_version: SCHEMA_VERSION,
            command: "fit",
            input,
            n,
            p: fit.beta_hat.len(),
            info_kind: fit.info.kind,
            coefficients,
            fit,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct InfoOutput {
    pub schema_version: u32,
    pub command: &'static str,
    pub input: String,
    pub n: usize,
    /// Row and column labels: the regressors, then `theta`.
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub theta: f64,
    pub matrices: Vec<InfoMatrix>,
}

#[derive(Debug, Serialize)]
pub struct VerifyOutput<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub all_expected_hold: bool,
    pub report: &'a VerifyReport,
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable output");
    s.push('\n');
    s
}

fn csv_line(fields: &[String]) -> String {
    let quoted: Vec<String> = fields
        .iter()
        .map(|f| if f.contains([',', '"', '\n']) { format!("\"{}\"", f.replace('"', "\"\"")) } else { f.clone() })
        .collect();
    quoted.join(",") + "\n"
}

pub fn fit(out: &FitOutput, format: Format) -> String {
    match format {
        Format::Json => json(out),
        Format::Csv => {
            let mut s = csv_line(&["term".into(), "estimate".into(), "se".into(), "z".into()]);
            for c in &out.coefficients {
                s += &csv_line(&[c.name.clone(), sig12(c.estimate), opt(c.se), opt(c.z)]);
            }
            s
        }
        Format::Text => {
            let f = out.fit;
            let width = out.coefficients.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
            let mut s = String::new();
            let _ = writeln!(s, "NB2 fit: {} (n = {}, p = {}, info = {:?})", out.input, out.n, out.p, out.info_kind);
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<width$}  {:>19}  {:>19}  {:>19}", "term", "estimate", "std. error", "z");
            for c in &out.coefficients {
                let _ =
                    writeln!(s, "{:<width$}  {:>19}  {:>19}  {:>19}", c.name, sig12(c.estimate), opt(c.se), opt(c.z));
            }
            let _ = writeln!(s);
            let _ = writeln!(s, "log-likelihood   {}", sig12(f.loglik_at_mle));
            let _ = writeln!(s, "iterations       {}", f.iterations);
            let _ = writeln!(s, "converged        {} ({:?})", f.converged, f.termination);
            let _ = writeln!(s, "gradient norm    {}", sig12(f.gradient_norm));
            if f.boundary_theta {
                let _ = writeln!(s, "theta is at its lower bound; the data look Poisson");
            }
            if f.se.is_none() {
                let _ = writeln!(s, "standard errors unavailable: information matrix is not positive definite");
            }
            if let Some(t) = &f.info.truncation {
                let _ = writeln!(s, "tail convention  {:?}", t.convention);
            }
            s
        }
    }
}

pub fn info(out: &InfoOutput, format: Format) -> String {
    match format {
        Format::Json => json(out),
        Format::Csv => {
            let mut header = vec!["kind".to_string(), "row".to_string()];
            header.extend(out.names.iter().cloned());
            let mut s = csv_line(&header);
            for m in &out.matrices {
                for (i, name) in out.names.iter().enumerate() {
                    let mut row = vec![format!("{:?}", m.kind).to_uppercase(), name.clone()];
                    row.extend(m.matrix.row(i).iter().map(|&v| sig12(v)));
                    s += &csv_line(&row);
                }
            }
            s
        }
        Format::Text => {
            let width = out.names.iter().map(String::len).max().unwrap_or(5).max(5);
            let mut s = String::new();
            for m in &out.matrices {
                let _ = writeln!(s, "{:?} information ({}, n = {})", m.kind, out.input, out.n);
                let _ = write!(s, "{:<width$}", "");
                for name in &out.names {
                    let _ = write!(s, "  {name:>19}");
                }
                let _ = writeln!(s);
                for (i, name) in out.names.iter().enumerate() {
                    let _ = write!(s, "{name:<width$}");
                    for &v in m.matrix.row(i).iter() {
                        let _ = write!(s, "  {:>19}", sig12(v));
                    }
                    let _ = writeln!(s);
                }
                if let Some(t) = &m.truncation {
                    let max_cut = t.entries.iter().map(|e| e.cutoff).max().unwrap_or(0);
                    let worst = t.entries.iter().map(|e| e.residual_bound).fold(0.0, f64::max);
                    let _ = writeln!(s, "tail convention        {:?}", t.convention);
                    let _ = writeln!(s, "theta element, Pr(Y>=j)    {}", sig12(t.theta_element_at_least_j));
                    let _ = writeln!(s, "theta element, Pr(Y>=j+1)  {}", sig12(t.theta_element_at_least_j_plus_one));
                    let _ = writeln!(s, "theta element, double sum  {}", sig12(t.theta_element_double_sum));
                    let _ = writeln!(s, "largest cutoff {max_cut}, worst residual bound {}", sig12(worst));
                }
                let _ = writeln!(s);
            }
            s
        }
    }
}

struct VerifyRow {
    section: String,
    item: String,
    expectation: &'static str,
    max_residual: f64,
    tol: f64,
    verdict: &'static str,
}

fn verify_rows(r: &VerifyReport) -> Vec<VerifyRow> {
    let mut rows = Vec::new();
    for id in &r.identities {
        for p in &id.pairs {
            let (expectation, verdict) = match (p.expectation, p.verdict) {
                (Expectation::Holds, Verdict::Holds { .. }) => ("HOLDS", "HOLDS"),
                (Expectation::Holds, Verdict::Fails { .. }) => ("HOLDS", "FAILS"),
                (Expectation::Disputed, Verdict::Holds { .. }) => ("DISPUTED", "HOLDS"),
                (Expectation::Disputed, Verdict::Fails { .. }) => ("DISPUTED", "FAILS (expected)"),
            };
            rows.push(VerifyRow {
                section: serde_json::to_value(id.identity)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                item: p.pair.clone(),
                expectation,
                max_residual: p.max_residual,
                tol: p.tol,
                verdict,
            });
        }
    }
    for sweep in [&r.mixture, &r.mean, &r.binomial_form] {
        rows.push(VerifyRow {
            section: "SWEEP".into(),
            item: sweep.name.clone(),
            expectation: "HOLDS",
            max_residual: sweep.max_residual,
            tol: sweep.tol,
            verdict: if sweep.holds { "HOLDS" } else { "FAILS" },
        });
    }
    let f = &r.fisher;
    rows.push(VerifyRow {
        section: "FISHER".into(),
        item: match f.matching_convention {
            Some(c) => format!("expected theta element vs brute force, convention {c:?}"),
            None => "expected theta element vs brute force, no convention matches".into(),
        },
        expectation: "HOLDS",
        max_residual: f.max_relative_error,
        tol: f.rel_tol,
        verdict: if f.holds { "HOLDS" } else { "FAILS" },
    });
    let d = &r.derivatives;
    let w = d.worst;
    for (name, v) in [
        ("score_beta", w.score_beta),
        ("score_theta", w.score_theta),
        ("h_beta_beta", w.h_beta_beta),
        ("h_beta_theta", w.h_beta_theta),
        ("h_theta_theta", w.h_theta_theta),
    ] {
        rows.push(VerifyRow {
            section: "DERIVATIVES".into(),
            item: format!("{name} over {} instances", d.instances),
            expectation: "HOLDS",
            max_residual: v,
            tol: d.tol,
            verdict: if v < d.tol { "HOLDS" } else { "FAILS" },
        });
    }
    rows
}

pub fn verify(out: &VerifyOutput, format: Format) -> String {
    match format {
        Format::Json => json(out),
        Format::Csv => {
            let mut s =
                csv_line(&["section", "item", "expectation", "max_residual", "tol", "verdict"].map(String::from));
            for r in verify_rows(out.report) {
                s += &csv_line(&[
                    r.section,
                    r.item,
                    r.expectation.into(),
                    sig12(r.max_residual),
                    sig12(r.tol),
                    r.verdict.into(),
                ]);
            }
            s
        }
        Format::Text => {
            let rows = verify_rows(out.report);
            let sw = rows.iter().map(|r| r.section.len()).max().unwrap_or(0);
            let iw = rows.iter().map(|r| r.item.len()).max().unwrap_or(0);
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:<sw$}  {:<iw$}  {:<8}  {:>19}  {:>8}  verdict",
                "section", "item", "expect", "max residual", "tol"
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:<sw$}  {:<iw$}  {:<8}  {:>19}  {:>8}  {}",
                    r.section,
                    r.item,
                    r.expectation,
                    sig12(r.max_residual),
                    sig12(r.tol),
                    r.verdict
                );
            }
            let _ = writeln!(
                s,
                "\n{}",
                if out.all_expected_hold { "all expected pairs hold" } else { "VERIFICATION FAILED" }
            );
            s
        }
    }
}
