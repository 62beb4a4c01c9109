//! The full verification report: identity adjudication plus the numerical
//! sweeps for the mixture representation, the truncated mean, the expected
//! θθ information and the analytic derivatives.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derivatives::grad_hess;
use crate::error::Result;
use crate::finite_diff::{first_step, relative_error, richardson_diff};
use crate::fisher::{brute_force_expected_neg_hessian, expected_info_theta, TailConvention};
use crate::identity::{check_all, default_grid, GridPoint, IdentityReport, IdentityTolerances};
use crate::mixture::{mixture_pmf, nb_mean_bruteforce, NbSampler, QuadratureSpec};
use crate::model::{link_mean, loglik, nb_pmf, nb_pmf_binomial_form, Dataset, Params, DEFAULT_EPS_TAIL};

pub const MIXTURE_TOL: f64 = 1e-8;
pub const MEAN_TOL: f64 = 1e-6;
pub const BINOMIAL_TOL: f64 = 1e-12;
pub const FISHER_REL_TOL: f64 = 1e-6;
pub const CONVENTION_TOL: f64 = 1e-9;
pub const DERIVATIVE_TOL: f64 = 1e-5;

pub const SWEEP_LAMBDAS: [f64; 3] = [0.5, 1.0, 5.0];
pub const SWEEP_ALPHAS: [f64; 4] = [0.5, 1.0, 2.0, 10.0];
pub const FISHER_LAMBDAS: [f64; 3] = [0.2, 1.0, 5.0];
pub const FISHER_THETAS: [f64; 3] = [0.2, 1.0, 3.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub grid: Vec<GridPoint>,
    pub tolerances: IdentityTolerances,
    pub eps_tail: f64,
    pub derivative_instances: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            grid: default_grid(),
            tolerances: IdentityTolerances::default(),
            eps_tail: DEFAULT_EPS_TAIL,
            derivative_instances: 200,
            seed: 20_240_601,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// A family of pairwise comparisons sharing one tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub name: String,
    pub tol: f64,
    pub max_residual: f64,
    pub holds: bool,
    pub points: Vec<SweepPoint>,
}

impl Sweep {
    fn new(name: &str, tol: f64, points: Vec<SweepPoint>) -> Self {
        let max_residual = points.iter().map(|p| p.residual).fold(0.0, f64::max);
        let holds = points.iter().all(|p| p.residual <= tol);
        Sweep { name: name.to_string(), tol, max_residual, holds, points }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherPoint {
    pub lambda: f64,
    pub theta: f64,
    pub expected: f64,
    pub brute_force: f64,
    pub relative_error: f64,
    pub at_least_j: f64,
    pub at_least_j_plus_one: f64,
    pub double_sum: f64,
    pub convention: TailConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherSweep {
    pub rel_tol: f64,
    pub convention_tol: f64,
    /// The convention that matched the double sum at every grid point, if any.
    pub matching_convention: Option<TailConvention>,
    pub all_positive: bool,
    pub max_relative_error: f64,
    pub holds: bool,
    pub points: Vec<FisherPoint>,
}

/// Worst relative error per derivative block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockErrors {
    pub score_beta: f64,
    pub score_theta: f64,
    pub h_beta_beta: f64,
    pub h_beta_theta: f64,
    pub h_theta_theta: f64,
}

impl BlockErrors {
    fn max(&self) -> f64 {
        [self.score_beta, self.score_theta, self.h_beta_beta, self.h_beta_theta, self.h_theta_theta]
            .into_iter()
            .fold(0.0, f64::max)
    }

    fn merge(self, o: BlockErrors) -> BlockErrors {
        BlockErrors {
            score_beta: self.score_beta.max(o.score_beta),
            score_theta: self.score_theta.max(o.score_theta),
            h_beta_beta: self.h_beta_beta.max(o.h_beta_beta),
            h_beta_theta: self.h_beta_theta.max(o.h_beta_theta),
            h_theta_theta: self.h_theta_theta.max(o.h_theta_theta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSuite {
    pub instances: usize,
    pub seed: u64,
    pub tol: f64,
    pub worst: BlockErrors,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub identities: Vec<IdentityReport>,
    pub mixture: Sweep,
    pub mean: Sweep,
    pub binomial_form: Sweep,
    pub fisher: FisherSweep,
    pub derivatives: DerivativeSuite,
    pub all_expected_hold: bool,
}

pub fn mixture_sweep() -> Result<Sweep> {
    let spec = QuadratureSpec::default();
    let mut points = Vec::new();
    for &lambda in &SWEEP_LAMBDAS {
        for &alpha in &SWEEP_ALPHAS {
            for y in 0..=10u64 {
                let lhs = mixture_pmf(y, lambda, alpha, &spec)?;
                let rhs = nb_pmf(y, lambda, alpha)?;
                points.push(SweepPoint {
                    label: format!("y={y} lambda={lambda} alpha={alpha}"),
                    lhs,
                    rhs,
                    residual: (lhs - rhs).abs(),
                });
            }
        }
    }
    Ok(Sweep::new("mixture_pmf vs nb_pmf", MIXTURE_TOL, points))
}

pub fn mean_sweep(eps_tail: f64) -> Result<Sweep> {
    let mut points = Vec::new();
    for &lambda in &SWEEP_LAMBDAS {
        for &alpha in &SWEEP_ALPHAS {
            let lhs = nb_mean_bruteforce(lambda, alpha, eps_tail)?;
            points.push(SweepPoint {
                label: format!("lambda={lambda} alpha={alpha}"),
                lhs,
                rhs: lambda,
                residual: (lhs - lambda).abs(),
            });
        }
    }
    Ok(Sweep::new("truncated mean vs lambda", MEAN_TOL, points))
}

pub fn binomial_sweep() -> Result<Sweep> {
    let mut points = Vec::new();
    for alpha in 1..=3u64 {
        for &lambda in &SWEEP_LAMBDAS {
            for y in 0..=20u64 {
                let lhs = nb_pmf_binomial_form(y, lambda, alpha)?;
                let rhs = nb_pmf(y, lambda, alpha as f64)?;
                points.push(SweepPoint {
                    label: format!("y={y} lambda={lambda} alpha={alpha}"),
                    lhs,
                    rhs,
                    residual: (lhs - rhs).abs(),
                });
            }
        }
    }
    Ok(Sweep::new("binomial form vs gamma form", BINOMIAL_TOL, points))
}

pub fn fisher_sweep(eps_tail: f64) -> Result<FisherSweep> {
    let mut points = Vec::new();
    for &lambda in &FISHER_LAMBDAS {
        for &theta in &FISHER_THETAS {
            let ds = Dataset::new(vec![0], DMatrix::from_element(1, 1, 1.0), vec!["(Intercept)".into()])?;
            let params = Params::from_slice(&[lambda.ln()], theta)?;
            let lam = link_mean(ds.x(), params.beta())?.lambda()[0];
            let info = expected_info_theta(&ds, &params, eps_tail)?;
            let brute = brute_force_expected_neg_hessian(lam, theta, eps_tail)?.value;
            let r = &info.report;
            points.push(FisherPoint {
                lambda,
                theta,
                expected: info.value,
                brute_force: brute,
                relative_error: (info.value - brute).abs() / brute.abs(),
                at_least_j: r.theta_element_at_least_j,
                at_least_j_plus_one: r.theta_element_at_least_j_plus_one,
                double_sum: r.theta_element_double_sum,
                convention: r.convention,
            });
        }
    }
    let matches = |pt: &FisherPoint, c: TailConvention| {
        let v = match c {
            TailConvention::AtLeastJ => pt.at_least_j,
            TailConvention::AtLeastJPlusOne => pt.at_least_j_plus_one,
        };
        (v - pt.double_sum).abs() <= CONVENTION_TOL * pt.double_sum.abs().max(1.0)
    };
    let matching_convention = [TailConvention::AtLeastJ, TailConvention::AtLeastJPlusOne]
        .into_iter()
        .find(|&c| points.iter().all(|pt| matches(pt, c)));
    let all_positive = points.iter().all(|p| p.expected > 0.0);
    let max_relative_error = points.iter().map(|p| p.relative_error).fold(0.0, f64::max);
    let used_everywhere = matching_convention.is_some_and(|c| points.iter().all(|p| p.convention == c));
    Ok(FisherSweep {
        rel_tol: FISHER_REL_TOL,
        convention_tol: CONVENTION_TOL,
        matching_convention,
        all_positive,
        max_relative_error,
        holds: all_positive && used_everywhere && max_relative_error <= FISHER_REL_TOL,
        points,
    })
}

/// A random dataset and parameter point: `n ≤ 50`, `p ≤ 4` including the
/// intercept, standard normal regressors, `β ~ U(−1, 1)`, `θ ~ U(0.1, 5)`,
/// and counts drawn from the model at those parameters.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Result<(Dataset, Params)> {
    let n = rng.random_range(5..=50usize);
    let p = rng.random_range(1..=4usize);
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let theta = rng.random_range(0.1..5.0);
    let mut sampler = NbSampler::new(rng.random());
    let x = DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { sampler.standard_normal() });
    let params = Params::from_slice(&beta, theta)?;
    let link = link_mean(&x, params.beta())?;
    let y = link.lambda().iter().map(|&lam| sampler.draw(lam, theta)).collect::<Result<Vec<_>>>()?;
    let mut names = vec!["(Intercept)".to_string()];
    names.extend((1..p).map(|k| format!("x{k}")));
    Ok((Dataset::new(y, x, names)?, params))
}

/// Instance `k` of the family keyed by `seed`: [`random_instance`] driven
/// by ChaCha stream `k`.
pub fn seeded_instance(seed: u64, k: u64) -> Result<(Dataset, Params)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    random_instance(&mut rng)
}

fn with_beta(params: &Params, k: usize, v: f64) -> Params {
    let mut b = params.beta().clone();
    b[k] = v;
    Params::new(b, params.theta()).expect("finite perturbation")
}

fn with_theta(params: &Params, t: f64) -> Params {
    Params::new(params.beta().clone(), t).expect("positive perturbation")
}

/// Compares every analytic block with central differences: scores against
/// the log-likelihood, Hessian blocks against the analytic scores.
pub fn derivative_errors(ds: &Dataset, params: &Params) -> Result<BlockErrors> {
    let gh = grad_hess(ds, params)?;
    let p = ds.p();
    let theta = params.theta();
    let ht = first_step(theta).min(0.5 * theta);
    let scores = |pp: &Params| grad_hess(ds, pp).expect("valid perturbation");
    let mut e =
        BlockErrors { score_beta: 0.0, score_theta: 0.0, h_beta_beta: 0.0, h_beta_theta: 0.0, h_theta_theta: 0.0 };

    for k in 0..p {
        let b0 = params.beta()[k];
        let h = first_step(b0);
        let fd = richardson_diff(|v| loglik(ds, &with_beta(params, k, v)).unwrap_or(f64::NAN), b0, h)?;
        e.score_beta = e.score_beta.max(relative_error(gh.score_beta[k], fd));
        let col = fd_vector(|v| scores(&with_beta(params, k, v)).score_beta, b0, h)?;
        for l in 0..p {
            e.h_beta_beta = e.h_beta_beta.max(relative_error(gh.h_bb[(l, k)], col[l]));
        }
        let fd_bt = richardson_diff(|v| scores(&with_beta(params, k, v)).score_theta, b0, h)?;
        e.h_beta_theta = e.h_beta_theta.max(relative_error(gh.h_bt[k], fd_bt));
    }
    let fd = richardson_diff(|t| loglik(ds, &with_theta(params, t)).unwrap_or(f64::NAN), theta, ht)?;
    e.score_theta = relative_error(gh.score_theta, fd);
    let fd_tb = fd_vector(|t| scores(&with_theta(params, t)).score_beta, theta, ht)?;
    for k in 0..p {
        e.h_beta_theta = e.h_beta_theta.max(relative_error(gh.h_bt[k], fd_tb[k]));
    }
    let fd_tt = richardson_diff(|t| scores(&with_theta(params, t)).score_theta, theta, ht)?;
    e.h_theta_theta = relative_error(gh.h_tt, fd_tt);
    Ok(e)
}

fn fd_vector<F: Fn(f64) -> DVector<f64>>(f: F, x0: f64, h: f64) -> Result<DVector<f64>> {
    let d = |h: f64| (f(x0 + h) - f(x0 - h)) / (2.0 * h);
    let out = (d(0.5 * h) * 4.0 - d(h)) / 3.0;
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(crate::error::Error::NonFinite("finite-difference evaluation"))
    }
}

/// Runs [`derivative_errors`] on [`seeded_instance`]`(seed, k)` for
/// `k < instances`; the result does not depend on scheduling.
pub fn derivative_suite(instances: usize, seed: u64) -> Result<DerivativeSuite> {
    let errors = (0..instances as u64)
        .into_par_iter()
        .map(|k| {
            let (ds, params) = seeded_instance(seed, k)?;
            derivative_errors(&ds, &params)
        })
        .collect::<Result<Vec<_>>>()?;
    let zero =
        BlockErrors { score_beta: 0.0, score_theta: 0.0, h_beta_beta: 0.0, h_beta_theta: 0.0, h_theta_theta: 0.0 };
    let worst = errors.into_iter().fold(zero, BlockErrors::merge);
    Ok(DerivativeSuite { instances, seed, tol: DERIVATIVE_TOL, worst, holds: worst.max() < DERIVATIVE_TOL })
}

pub fn run(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let identities = check_all(&cfg.grid, cfg.tolerances);
    let mixture = mixture_sweep()?;
    let mean = mean_sweep(cfg.eps_tail)?;
    let binomial_form = binomial_sweep()?;
    let fisher = fisher_sweep(cfg.eps_tail)?;
    let derivatives = derivative_suite(cfg.derivative_instances, cfg.seed)?;
    let all_expected_hold = identities.iter().all(IdentityReport::expected_pairs_hold)
        && mixture.holds
        && mean.holds
        && binomial_form.holds
        && fisher.holds
        && derivatives.holds;
    Ok(VerifyReport { identities, mixture, mean, binomial_form, fisher, derivatives, all_expected_hold })
}
