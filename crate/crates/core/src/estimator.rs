//! Maximum-likelihood fitting of `(β, θ)`.
//!
//! Joint Newton iterations run on `(β, ln θ)` with a step-halving line
//! search that only accepts steps which do not lower the log-likelihood.
//! When three line searches in a row fail, one profile step over `ln θ`
//! (golden section, with β re-optimized at each trial θ) is taken before
//! joint Newton resumes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::derivatives::{grad_hess_with_link, GradHess};
use crate::error::{Error, Result};
use crate::fisher::{information, InfoKind, InfoMatrix};
use crate::model::{link_mean, loglik_with_link, Dataset, Params, DEFAULT_EPS_TAIL};

/// Coordinates used for the dispersion during the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaScale {
    Log,
    /// Raw θ with clamping at the floor; kept for cross-checking the
    /// log-scale search.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub loglik_tol: f64,
    pub info_kind: InfoKind,
    pub theta_floor: f64,
    pub eps_tail: f64,
    pub theta_scale: ThetaScale,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 100,
            grad_tol: 1e-8,
            loglik_tol: 1e-10,
            info_kind: InfoKind::Observed,
            theta_floor: 1e-6,
            eps_tail: DEFAULT_EPS_TAIL,
            theta_scale: ThetaScale::Log,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Domain { name: "max_iter", value: 0.0 });
        }
        for (name, v) in [
            ("grad_tol", self.grad_tol),
            ("loglik_tol", self.loglik_tol),
            ("theta_floor", self.theta_floor),
            ("eps_tail", self.eps_tail),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain { name, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Gradient norm on the free coordinates fell below `grad_tol`.
    Gradient,
    /// Two consecutive accepted steps changed the log-likelihood by at most
    /// `loglik_tol`. The fit is still reported as converged only if the
    /// gradient norm is within `grad_tol`.
    LoglikChange,
    MaxIterations,
    /// No direction, including the profile fallback, improved the
    /// log-likelihood.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub beta_hat: Vec<f64>,
    pub theta_hat: f64,
    /// Standard errors for `(β, θ)`; `None` when the information matrix is
    /// not positive definite.
    pub se: Option<Vec<f64>>,
    pub loglik_at_mle: f64,
    /// Log-likelihood after initialization and after each accepted step.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Euclidean norm of the gradient on the free coordinates at the
    /// returned point, in the search coordinates.
    pub gradient_norm: f64,
    pub boundary_theta: bool,
    pub info: InfoMatrix,
}

impl FitResult {
    pub fn params(&self) -> Params {
        Params::from_slice(&self.beta_hat, self.theta_hat).expect("fitted parameters are valid")
    }
}

/// Starting values: least squares of `ln(y + 0.5)` on the design for β and
/// the method-of-moments dispersion `(s² − ȳ)/ȳ²` clamped to `[0.01, 100]`.
pub fn init_params(ds: &Dataset) -> Result<Params> {
    check_full_rank(ds)?;
    let x = ds.x();
    let target = DVector::from_iterator(ds.n(), ds.y().iter().map(|&y| (y as f64 + 0.5).ln()));
    let xtx = x.transpose() * x;
    let xty = x.transpose() * target;
    let beta = xtx.cholesky().ok_or_else(|| Error::Collinear { columns: ds.names().to_vec() })?.solve(&xty);

    let n = ds.n() as f64;
    let mean = ds.y().iter().map(|&y| y as f64).sum::<f64>() / n;
    let var = if ds.n() > 1 { ds.y().iter().map(|&y| (y as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let theta = if mean > 0.0 { ((var - mean) / (mean * mean)).clamp(0.01, 100.0) } else { 1.0 };
    Params::new(beta, theta)
}

/// Modified Gram–Schmidt; a column whose residual after projecting out the
/// preceding independent columns is negligible is reported together with the
/// columns it depends on.
fn check_full_rank(ds: &Dataset) -> Result<()> {
    let x = ds.x();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut r = col.clone();
        for q in &basis {
            let c = q.dot(&r);
            r.axpy(-c, q, 1.0);
        }
        let rn = r.norm();
        if norm == 0.0 || rn <= 1e-10 * norm {
            let mut columns = Vec::new();
            if norm > 0.0 && !kept.is_empty() {
                let sub = DMatrix::from_fn(x.nrows(), kept.len(), |i, k| x[(i, kept[k])]);
                if let Some(ch) = (sub.transpose() * &sub).cholesky() {
                    let coef = ch.solve(&(sub.transpose() * &col));
                    let scale = coef.amax();
                    for (k, &c) in coef.iter().enumerate() {
                        if c.abs() > 1e-8 * scale.max(1.0) {
                            columns.push(ds.names()[kept[k]].clone());
                        }
                    }
                }
            }
            columns.push(ds.names()[j].clone());
            return Err(Error::Collinear { columns });
        }
        basis.push(r / rn);
        kept.push(j);
    }
    Ok(())
}

/// Square roots of the diagonal of the inverse information.
pub fn standard_errors(info: &InfoMatrix) -> Result<Vec<f64>> {
    let m = &info.matrix;
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension("information matrix is not square".into()));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).amax() > 1e-8 * scale || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let inv = chol.inverse();
    inv.diagonal()
        .iter()
        .map(|&v| if v > 0.0 && v.is_finite() { Ok(v.sqrt()) } else { Err(Error::NotPositiveDefinite) })
        .collect()
}

#[derive(Debug, Clone)]
struct Point {
    beta: DVector<f64>,
    theta: f64,
    ll: f64,
    gh: GradHess,
}

fn evaluate(ds: &Dataset, beta: DVector<f64>, theta: f64) -> Result<Point> {
    let link = link_mean(ds.x(), &beta)?;
    let ll = loglik_with_link(ds, &link, theta);
    if !ll.is_finite() {
        return Err(Error::NonFinite("log-likelihood"));
    }
    let gh = grad_hess_with_link(ds, &link, theta);
    Ok(Point { beta, theta, ll, gh })
}

/// Noise level of a summed log-likelihood; differences below this are not
/// resolvable.
fn ll_noise(ll: f64) -> f64 {
    1e-12 * (1.0 + ll.abs())
}

struct Search<'a> {
    ds: &'a Dataset,
    opts: &'a FitOptions,
    p: usize,
}

impl Search<'_> {
    fn at_floor(&self, pt: &Point) -> bool {
        pt.theta <= self.opts.theta_floor * (1.0 + 1e-12)
    }

    /// Gradient and Hessian in search coordinates.
    fn working(&self, pt: &Point) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.p;
        let gh = &pt.gh;
        let (chain, curv) = match self.opts.theta_scale {
            ThetaScale::Log => (pt.theta, pt.theta * pt.theta * gh.h_tt + pt.theta * gh.score_theta),
            ThetaScale::Direct => (1.0, gh.h_tt),
        };
        let mut g = DVector::zeros(p + 1);
        g.rows_mut(0, p).copy_from(&gh.score_beta);
        g[p] = chain * gh.score_theta;
        let mut h = DMatrix::zeros(p + 1, p + 1);
        h.view_mut((0, 0), (p, p)).copy_from(&gh.h_bb);
        for k in 0..p {
            h[(k, p)] = chain * gh.h_bt[k];
            h[(p, k)] = chain * gh.h_bt[k];
        }
        h[(p, p)] = curv;
        (g, h)
    }

    /// Free coordinates: θ is pinned when it sits on the floor and the
    /// gradient pushes it further down.
    fn free_dims(&self, pt: &Point, g: &DVector<f64>) -> usize {
        if self.at_floor(pt) && g[self.p] <= 0.0 {
            self.p
        } else {
            self.p + 1
        }
    }

    fn candidate(&self, pt: &Point, dir: &DVector<f64>, t: f64) -> Result<Point> {
        let p = self.p;
        let beta = &pt.beta + dir.rows(0, p) * t;
        let theta = if dir.len() > p {
            match self.opts.theta_scale {
                ThetaScale::Log => (pt.theta.ln() + t * dir[p]).exp(),
                ThetaScale::Direct => pt.theta + t * dir[p],
            }
        } else {
            pt.theta
        };
        let theta = theta.max(self.opts.theta_floor);
        if !theta.is_finite() {
            return Err(Error::NonFinite("dispersion step"));
        }
        evaluate(self.ds, beta, theta)
    }

    fn grad_norm(&self, pt: &Point) -> f64 {
        let (g, _) = self.working(pt);
        let k = self.free_dims(pt, &g);
        g.rows(0, k).norm()
    }

    fn line_search(&self, pt: &Point, dir: &DVector<f64>) -> Option<Point> {
        let g0 = self.grad_norm(pt);
        let mut t = 1.0;
        for _ in 0..50 {
            if let Ok(cand) = self.candidate(pt, dir, t) {
                if cand.ll >= pt.ll {
                    return Some(cand);
                }
                // Below the resolution of the log-likelihood, accept steps
                // that still reduce the gradient.
                if pt.ll - cand.ll <= ll_noise(pt.ll) && self.grad_norm(&cand) < g0 {
                    return Some(cand);
                }
            }
            t *= 0.5;
        }
        None
    }

    fn directions(&self, pt: &Point) -> Vec<DVector<f64>> {
        let (g, h) = self.working(pt);
        let k = self.free_dims(pt, &g);
        let g = g.rows(0, k).into_owned();
        let neg_h = -h.view((0, 0), (k, k)).into_owned();
        let diag_max = neg_h.diagonal().amax().max(1e-12);
        let mut dirs = Vec::with_capacity(3);
        if let Some(d) = ridge_solve(&neg_h, &g, 0.0) {
            dirs.push(d);
        }
        if let Some(d) = ridge_solve(&neg_h, &g, diag_max) {
            dirs.push(d);
        }
        dirs.push(&g / g.norm().max(1.0));
        dirs.into_iter().map(cap_step).collect()
    }

    /// β-only Newton at fixed θ.
    fn optimize_beta(&self, start: &Point, theta: f64) -> Option<Point> {
        let mut pt = evaluate(self.ds, start.beta.clone(), theta).ok()?;
        for _ in 0..50 {
            let g = pt.gh.score_beta.clone();
            if g.norm() <= self.opts.grad_tol {
                break;
            }
            let neg_h = -pt.gh.h_bb.clone();
            let dir = cap_step(ridge_solve(&neg_h, &g, 0.0).unwrap_or_else(|| &g / g.norm().max(1.0)));
            match self.line_search(&pt, &dir) {
                Some(next) => {
                    let small = (next.ll - pt.ll).abs() <= self.opts.loglik_tol;
                    pt = next;
                    if small {
                        break;
                    }
                }
                None => break,
            }
        }
        Some(pt)
    }

    /// Golden-section search over ln θ of the profile log-likelihood.
    fn profile_step(&self, pt: &Point) -> Option<Point> {
        let floor = self.opts.theta_floor.ln();
        let phi = pt.theta.ln();
        let (mut lo, mut hi) = ((phi - 4.0).max(floor), phi + 4.0);
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let eval = |phi: f64| self.optimize_beta(pt, phi.exp().max(self.opts.theta_floor));
        let mut best: Option<Point> = None;
        let mut keep = |cand: Option<Point>| -> f64 {
            match cand {
                Some(c) => {
                    let ll = c.ll;
                    if best.as_ref().is_none_or(|b| ll > b.ll) {
                        best = Some(c);
                    }
                    ll
                }
                None => f64::NEG_INFINITY,
            }
        };
        let mut x1 = hi - ratio * (hi - lo);
        let mut x2 = lo + ratio * (hi - lo);
        let mut f1 = keep(eval(x1));
        let mut f2 = keep(eval(x2));
        for _ in 0..60 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + ratio * (hi - lo);
                f2 = keep(eval(x2));
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - ratio * (hi - lo);
                f1 = keep(eval(x1));
            }
            if hi - lo < 1e-10 {
                break;
            }
        }
        keep(eval(floor));
        best.filter(|b| b.ll > pt.ll)
    }
}

fn ridge_solve(a: &DMatrix<f64>, g: &DVector<f64>, ridge: f64) -> Option<DVector<f64>> {
    let n = a.nrows();
    let scale = a.diagonal().amax().max(1e-12);
    let mut mu = ridge;
    for _ in 0..30 {
        let shifted = a + DMatrix::identity(n, n) * mu;
        if let Some(ch) = shifted.cholesky() {
            let d = ch.solve(g);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        mu = if mu == 0.0 { 1e-10 * scale } else { mu * 10.0 };
    }
    None
}

// Keeps any single coordinate from moving more than this per step.
const MAX_STEP: f64 = 10.0;

fn cap_step(d: DVector<f64>) -> DVector<f64> {
    let m = d.amax();
    if m > MAX_STEP {
        d * (MAX_STEP / m)
    } else {
        d
    }
}

fn pad(d: DVector<f64>, len: usize) -> DVector<f64> {
    if d.len() == len {
        d
    } else {
        let mut full = DVector::zeros(len);
        full.rows_mut(0, d.len()).copy_from(&d);
        full
    }
}

/// Fits NB2 by maximum likelihood.
pub fn fit(ds: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    if ds.y().iter().all(|&y| y == 0) {
        return Err(Error::AllZeroResponse);
    }
    let init = init_params(ds)?;
    let search = Search { ds, opts, p: ds.p() };
    let theta0 = init.theta().max(opts.theta_floor);
    let mut pt = evaluate(ds, init.beta().clone(), theta0)?;
    let mut trace = vec![pt.ll];
    let mut iterations = 0;
    let mut stalls = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < opts.max_iter {
        if search.grad_norm(&pt) <= opts.grad_tol {
            termination = Termination::Gradient;
            break;
        }
        let mut next = None;
        for dir in search.directions(&pt) {
            let dir = pad(dir, search.p + 1);
            if let Some(c) = search.line_search(&pt, &dir) {
                next = Some(c);
                break;
            }
        }
        if next.is_none() {
            next = search.profile_step(&pt);
        }
        let Some(next) = next else {
            termination = Termination::LineSearchFailed;
            break;
        };
        let change = next.ll - pt.ll;
        pt = next;
        trace.push(pt.ll);
        iterations += 1;
        if change.abs() <= opts.loglik_tol {
            stalls += 1;
            if stalls >= 2 {
                termination = Termination::LoglikChange;
                break;
            }
        } else {
            stalls = 0;
        }
    }
    if termination == Termination::MaxIterations && search.grad_norm(&pt) <= opts.grad_tol {
        termination = Termination::Gradient;
    }

    // A stalled log-likelihood stops the search but only counts as
    // convergence when the gradient is also small.
    let gradient_norm = search.grad_norm(&pt);
    let converged = gradient_norm <= opts.grad_tol;
    let params = Params::new(pt.beta.clone(), pt.theta)?;
    let info = information(ds, &params, opts.info_kind, opts.eps_tail)?;
    let se = standard_errors(&info).ok();
    Ok(FitResult {
        names: ds.names().to_vec(),
        beta_hat: pt.beta.iter().copied().collect(),
        theta_hat: pt.theta,
        se,
        loglik_at_mle: pt.ll,
        loglik_trace: trace,
        iterations,
        converged,
        termination,
        gradient_norm,
        boundary_theta: search.at_floor(&pt),
        info,
    })
}
