//! Analytic first and second derivatives of the θ-parameterized
//! log-likelihood.
//!
//! The estimator only consumes the gamma-free forms ([`score_theta`],
//! [`hessian_theta`]). The `*_gamma_form` variants substitute digamma and
//! trigamma differences for the finite sums, exactly as they are usually
//! written, and exist to be compared against.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{link_mean, Dataset, LinkValues, Params};
use crate::special::{digamma_unchecked, sum_recip_unchecked, sum_weights_unchecked, trigamma_unchecked};

/// Gradient and Hessian blocks of the log-likelihood in `(β, θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradHess {
    pub score_beta: DVector<f64>,
    pub score_theta: f64,
    pub h_bb: DMatrix<f64>,
    pub h_bt: DVector<f64>,
    pub h_tt: f64,
}

/// θ-score of a single observation with mean `lambda`.
pub fn obs_score_theta(y: u64, lambda: f64, theta: f64) -> f64 {
    let inv = 1.0 / theta;
    let tl = theta * lambda;
    inv * inv * (tl.ln_1p() - sum_recip_unchecked(y, inv)) + (y as f64 - lambda) / (theta * (1.0 + tl))
}

/// Second θ-derivative of a single observation's log-likelihood.
pub fn obs_hessian_theta(y: u64, lambda: f64, theta: f64) -> f64 {
    let inv = 1.0 / theta;
    let inv3 = inv * inv * inv;
    let tl = theta * lambda;
    let opl = 1.0 + tl;
    let resid = y as f64 - lambda;
    let bracket = (theta * (1.0 + 2.0 * tl) * resid - tl * opl) / (opl * opl) + 2.0 * tl.ln_1p();
    inv3 * sum_weights_unchecked(y, inv) - inv3 * bracket
}

fn eval_link(ds: &Dataset, params: &Params) -> Result<LinkValues> {
    params.check_dims(ds)?;
    link_mean(ds.x(), params.beta())
}

/// `Σ_i (y_i − λ_i)/(1 + θλ_i) · x_i`
pub fn score_beta(ds: &Dataset, params: &Params) -> Result<DVector<f64>> {
    let link = eval_link(ds, params)?;
    let theta = params.theta();
    let mut g = DVector::zeros(ds.p());
    for (i, (&y, &lambda)) in ds.y().iter().zip(link.lambda()).enumerate() {
        let w = (y as f64 - lambda) / (1.0 + theta * lambda);
        g.axpy(w, &ds.x().row(i).transpose(), 1.0);
    }
    Ok(g)
}

pub fn score_theta(ds: &Dataset, params: &Params) -> Result<f64> {
    let link = eval_link(ds, params)?;
    let theta = params.theta();
    Ok(ds.y().iter().zip(link.lambda()).map(|(&y, &l)| obs_score_theta(y, l, theta)).sum())
}

/// θ-score with the finite sum replaced by `Ψ(y+θ⁻¹) − Ψ(θ⁻¹)` and no
/// `−θ⁻²` chain factor on it.
pub fn score_theta_gamma_form(ds: &Dataset, params: &Params) -> Result<f64> {
    let link = eval_link(ds, params)?;
    let theta = params.theta();
    let inv = 1.0 / theta;
    let psi_base = digamma_unchecked(inv);
    Ok(ds
        .y()
        .iter()
        .zip(link.lambda())
        .map(|(&y, &lambda)| {
            let tl = theta * lambda;
            inv * inv * tl.ln_1p()
                + (y as f64 - lambda) / (theta * (1.0 + tl))
                + (digamma_unchecked(y as f64 + inv) - psi_base)
        })
        .sum())
}

pub fn hessian_theta(ds: &Dataset, params: &Params) -> Result<f64> {
    let link = eval_link(ds, params)?;
    let theta = params.theta();
    Ok(ds.y().iter().zip(link.lambda()).map(|(&y, &l)| obs_hessian_theta(y, l, theta)).sum())
}

/// Second θ-derivative with the weighted sum replaced by
/// `Ψ'(y+θ⁻¹) − Ψ'(θ⁻¹)`.
pub fn hessian_theta_gamma_form(ds: &Dataset, params: &Params) -> Result<f64> {
    let link = eval_link(ds, params)?;
    let theta = params.theta();
    let inv = 1.0 / theta;
    let inv3 = inv * inv * inv;
    let psi1_base = trigamma_unchecked(inv);
    Ok(ds
        .y()
        .iter()
        .zip(link.lambda())
        .map(|(&y, &lambda)| {
            let tl = theta * lambda;
            let opl = 1.0 + tl;
            let resid = y as f64 - lambda;
            let bracket = (theta * (1.0 + 2.0 * tl) * resid - tl * opl) / (opl * opl) + 2.0 * tl.ln_1p();
            -inv3 * bracket + (trigamma_unchecked(y as f64 + inv) - psi1_base)
        })
        .sum())
}

/// `−Σ_i λ_i(1 + θy_i)/(1 + θλ_i)² · x_i x_i'`
pub fn hessian_beta_beta(ds: &Dataset, params: &Params) -> Result<DMatrix<f64>> {
    let link = eval_link(ds, params)?;
    Ok(beta_block(ds, &link, params.theta()))
}

fn beta_block(ds: &Dataset, link: &LinkValues, theta: f64) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(ds.p(), ds.p());
    for (i, (&y, &lambda)) in ds.y().iter().zip(link.lambda()).enumerate() {
        let opl = 1.0 + theta * lambda;
        let w = -lambda * (1.0 + theta * y as f64) / (opl * opl);
        let xi = ds.x().row(i).transpose();
        h.syger(w, &xi, &xi, 1.0);
    }
    h.fill_upper_triangle_with_lower_triangle();
    h
}

/// `−Σ_i λ_i(y_i − λ_i)/(1 + θλ_i)² · x_i`
pub fn hessian_beta_theta(ds: &Dataset, params: &Params) -> Result<DVector<f64>> {
    let link = eval_link(ds, params)?;
    let theta = params.theta();
    let mut h = DVector::zeros(ds.p());
    for (i, (&y, &lambda)) in ds.y().iter().zip(link.lambda()).enumerate() {
        let opl = 1.0 + theta * lambda;
        let w = -lambda * (y as f64 - lambda) / (opl * opl);
        h.axpy(w, &ds.x().row(i).transpose(), 1.0);
    }
    Ok(h)
}

/// All gradient and Hessian blocks from a single pass over the data.
pub fn grad_hess(ds: &Dataset, params: &Params) -> Result<GradHess> {
    let link = eval_link(ds, params)?;
    Ok(grad_hess_with_link(ds, &link, params.theta()))
}

pub(crate) fn grad_hess_with_link(ds: &Dataset, link: &LinkValues, theta: f64) -> GradHess {
    let p = ds.p();
    let mut score_beta = DVector::zeros(p);
    let mut h_bt = DVector::zeros(p);
    let mut score_theta = 0.0;
    let mut h_tt = 0.0;
    for (i, (&y, &lambda)) in ds.y().iter().zip(link.lambda()).enumerate() {
        let opl = 1.0 + theta * lambda;
        let resid = y as f64 - lambda;
        let xi = ds.x().row(i).transpose();
        score_beta.axpy(resid / opl, &xi, 1.0);
        h_bt.axpy(-lambda * resid / (opl * opl), &xi, 1.0);
        score_theta += obs_score_theta(y, lambda, theta);
        h_tt += obs_hessian_theta(y, lambda, theta);
    }
    GradHess { score_beta, score_theta, h_bb: beta_block(ds, link, theta), h_bt, h_tt }
}
