//! Observed and expected (Fisher) information for `(β, θ)`.
//!
//! The expected θθ element needs `E[Σ_{j<y} w_j]` with
//! `w_j = (2j+θ⁻¹)/(j+θ⁻¹)²`. Swapping the order of summation turns it into a
//! weighted sum of tail probabilities, and the tail index is easy to get
//! wrong: both `Pr(Y ≥ j)` and `Pr(Y ≥ j+1)` are evaluated, the direct
//! double sum decides between them, and the matching one is used.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derivatives::{grad_hess, obs_hessian_theta};
use crate::error::{Error, Result};
use crate::model::{link_mean, truncated_pmf, Dataset, Params, TailCutoff};
use crate::special::trigamma_weight;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InfoKind {
    Observed,
    Expected,
}

/// Tail-probability index used in the expected weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TailConvention {
    /// `Σ_j w_j Pr(Y ≥ j)`
    AtLeastJ,
    /// `Σ_j w_j Pr(Y ≥ j+1)`
    AtLeastJPlusOne,
}

/// Per-observation truncation of the infinite sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationEntry {
    pub obs: usize,
    pub cutoff: u64,
    /// Upper bound on `Pr(Y > cutoff)`.
    pub tail_bound: f64,
    /// Bound on the neglected part of this observation's weighted tail sum.
    pub residual_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub convention: TailConvention,
    /// θθ element under each convention, and via the direct double sum.
    pub theta_element_at_least_j: f64,
    pub theta_element_at_least_j_plus_one: f64,
    pub theta_element_double_sum: f64,
    pub entries: Vec<TruncationEntry>,
}

/// Information matrix over `(β_1..β_p, θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoMatrix {
    pub kind: InfoKind,
    #[serde(with = "matrix_rows")]
    pub matrix: DMatrix<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationReport>,
}

impl InfoMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn theta_theta(&self) -> f64 {
        let k = self.dim() - 1;
        self.matrix[(k, k)]
    }
}

mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }
}

/// The three evaluations of `θ⁻³ E[Σ_{j<y} w_j]` for one `(λ, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedTrigamma {
    /// `θ⁻³ Σ_j w_j Pr(Y ≥ j)`
    pub at_least_j: f64,
    /// `θ⁻³ Σ_j w_j Pr(Y ≥ j+1)`
    pub at_least_j_plus_one: f64,
    /// `θ⁻³ Σ_y pmf(y) Σ_{j<y} w_j`
    pub double_sum: f64,
    pub cutoff: TailCutoff,
    pub residual_bound: f64,
}

impl ExpectedTrigamma {
    pub fn value(&self, convention: TailConvention) -> f64 {
        match convention {
            TailConvention::AtLeastJ => self.at_least_j,
            TailConvention::AtLeastJPlusOne => self.at_least_j_plus_one,
        }
    }
}

fn check_eps(eps_tail: f64) -> Result<()> {
    if eps_tail.is_finite() && eps_tail > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { name: "eps_tail", value: eps_tail })
    }
}

fn check_lambda_theta(lambda: f64, theta: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain { name: "lambda", value: lambda });
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::Domain { name: "theta", value: theta });
    }
    Ok(())
}

pub fn expected_trigamma_tail(lambda: f64, theta: f64, eps_tail: f64) -> Result<ExpectedTrigamma> {
    check_lambda_theta(lambda, theta)?;
    check_eps(eps_tail)?;
    let inv = 1.0 / theta;
    let inv3 = inv * inv * inv;
    let (pmf, cut) = truncated_pmf(lambda, inv, eps_tail)?;
    let top = pmf.len();

    // Tail masses Pr(j ≤ Y ≤ cutoff), accumulated from the top.
    let mut tail = vec![0.0; top + 1];
    for j in (0..top).rev() {
        tail[j] = tail[j + 1] + pmf[j];
    }

    let mut at_least_j = 0.0;
    let mut at_least_j_plus_one = 0.0;
    for j in 0..top {
        let w = trigamma_weight(j as u64, inv);
        at_least_j += w * tail[j];
        at_least_j_plus_one += w * tail[j + 1];
    }

    // Row-wise: Σ_y pmf(y) C(y) with C(y) = Σ_{j<y} w_j.
    let mut double_sum = 0.0;
    let mut cumulative = 0.0;
    for (y, &p) in pmf.iter().enumerate() {
        double_sum += p * cumulative;
        cumulative += trigamma_weight(y as u64, inv);
    }

    // Neglected mass times the largest partial sum it could multiply, with
    // C(y) growing at most like 2/(j+θ⁻¹) per step beyond the cutoff.
    let residual_bound = inv3 * cut.tail_bound * (cumulative + 2.0 * (1.0 + (top as f64 + inv).ln()));

    Ok(ExpectedTrigamma {
        at_least_j: inv3 * at_least_j,
        at_least_j_plus_one: inv3 * at_least_j_plus_one,
        double_sum: inv3 * double_sum,
        cutoff: cut,
        residual_bound,
    })
}

/// The expected θθ element and its truncation bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaInformation {
    /// Value under the adjudicated convention.
    pub value: f64,
    pub report: TruncationReport,
}

/// Picks the convention whose tail sums are closest to the direct double sum.
pub fn adjudicate_convention(terms: &[ExpectedTrigamma]) -> TailConvention {
    let dev_a: f64 = terms.iter().map(|t| (t.at_least_j - t.double_sum).abs()).sum();
    let dev_b: f64 = terms.iter().map(|t| (t.at_least_j_plus_one - t.double_sum).abs()).sum();
    if dev_b <= dev_a {
        TailConvention::AtLeastJPlusOne
    } else {
        TailConvention::AtLeastJ
    }
}

/// `θ⁻³ Σ_i [2 ln(1+θλ_i) − θλ_i/(1+θλ_i) − Σ_j w_j T_i(j)]`.
pub fn expected_info_theta(ds: &Dataset, params: &Params, eps_tail: f64) -> Result<ThetaInformation> {
    params.check_dims(ds)?;
    check_eps(eps_tail)?;
    let link = link_mean(ds.x(), params.beta())?;
    let theta = params.theta();
    let inv = 1.0 / theta;
    let inv3 = inv * inv * inv;

    // Per-observation sums are independent; collecting in order keeps the
    // final reduction deterministic.
    let terms: Vec<ExpectedTrigamma> = link
        .lambda()
        .par_iter()
        .map(|&lambda| expected_trigamma_tail(lambda, theta, eps_tail))
        .collect::<Result<_>>()?;
    let closed: f64 = link
        .lambda()
        .iter()
        .map(|&lambda| {
            let tl = theta * lambda;
            inv3 * (2.0 * tl.ln_1p() - tl / (1.0 + tl))
        })
        .sum();
    let entries = terms
        .iter()
        .enumerate()
        .map(|(obs, t)| TruncationEntry {
            obs,
            cutoff: t.cutoff.cutoff,
            tail_bound: t.cutoff.tail_bound,
            residual_bound: t.residual_bound,
        })
        .collect();
    let convention = adjudicate_convention(&terms);
    let total = |f: fn(&ExpectedTrigamma) -> f64| closed - terms.iter().map(f).sum::<f64>();
    let report = TruncationReport {
        convention,
        theta_element_at_least_j: total(|t| t.at_least_j),
        theta_element_at_least_j_plus_one: total(|t| t.at_least_j_plus_one),
        theta_element_double_sum: total(|t| t.double_sum),
        entries,
    };
    let value = match convention {
        TailConvention::AtLeastJ => report.theta_element_at_least_j,
        TailConvention::AtLeastJPlusOne => report.theta_element_at_least_j_plus_one,
    };
    Ok(ThetaInformation { value, report })
}

/// `Σ_i λ_i/(1+θλ_i) · x_i x_i'`, using `E[y_i] = λ_i`.
pub fn expected_info_beta(ds: &Dataset, params: &Params) -> Result<DMatrix<f64>> {
    params.check_dims(ds)?;
    let link = link_mean(ds.x(), params.beta())?;
    let theta = params.theta();
    let mut m = DMatrix::zeros(ds.p(), ds.p());
    for (i, &lambda) in link.lambda().iter().enumerate() {
        let xi = ds.x().row(i).transpose();
        m.syger(lambda / (1.0 + theta * lambda), &xi, &xi, 1.0);
    }
    m.fill_upper_triangle_with_lower_triangle();
    Ok(m)
}

/// Expected cross block, analytically zero, alongside its brute-force
/// pmf-weighted evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossInfo {
    pub analytic: DVector<f64>,
    pub brute_force: DVector<f64>,
}

pub fn expected_info_cross(ds: &Dataset, params: &Params, eps_tail: f64) -> Result<CrossInfo> {
    params.check_dims(ds)?;
    check_eps(eps_tail)?;
    let link = link_mean(ds.x(), params.beta())?;
    let theta = params.theta();
    let mut brute = DVector::zeros(ds.p());
    for (i, &lambda) in link.lambda().iter().enumerate() {
        let (pmf, _) = truncated_pmf(lambda, 1.0 / theta, eps_tail)?;
        let opl = 1.0 + theta * lambda;
        // E[−h_bt] per observation = x_i λ E[y − λ] / (1+θλ)²
        let e: f64 = pmf.iter().enumerate().map(|(y, &p)| p * lambda * (y as f64 - lambda)).sum();
        brute.axpy(e / (opl * opl), &ds.x().row(i).transpose(), 1.0);
    }
    Ok(CrossInfo { analytic: DVector::zeros(ds.p()), brute_force: brute })
}

/// Negative analytic Hessian, assembled over `(β, θ)`.
pub fn observed_info(ds: &Dataset, params: &Params) -> Result<InfoMatrix> {
    let gh = grad_hess(ds, params)?;
    let p = ds.p();
    let mut m = DMatrix::zeros(p + 1, p + 1);
    m.view_mut((0, 0), (p, p)).copy_from(&(-&gh.h_bb));
    for k in 0..p {
        m[(k, p)] = -gh.h_bt[k];
        m[(p, k)] = -gh.h_bt[k];
    }
    m[(p, p)] = -gh.h_tt;
    Ok(InfoMatrix { kind: InfoKind::Observed, matrix: m, truncation: None })
}

/// Full expected information: β block, zero cross block, θθ element.
pub fn expected_info(ds: &Dataset, params: &Params, eps_tail: f64) -> Result<InfoMatrix> {
    let beta = expected_info_beta(ds, params)?;
    let theta = expected_info_theta(ds, params, eps_tail)?;
    let p = ds.p();
    let mut m = DMatrix::zeros(p + 1, p + 1);
    m.view_mut((0, 0), (p, p)).copy_from(&beta);
    m[(p, p)] = theta.value;
    Ok(InfoMatrix { kind: InfoKind::Expected, matrix: m, truncation: Some(theta.report) })
}

pub fn information(ds: &Dataset, params: &Params, kind: InfoKind, eps_tail: f64) -> Result<InfoMatrix> {
    match kind {
        InfoKind::Observed => observed_info(ds, params),
        InfoKind::Expected => expected_info(ds, params, eps_tail),
    }
}

/// Brute-force `Σ_y pmf(y)·(−h_tt(y))` for one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BruteForceTheta {
    pub value: f64,
    pub cutoff: TailCutoff,
    /// `Σ_{y ≤ cutoff} pmf(y)`
    pub mass: f64,
}

pub fn brute_force_expected_neg_hessian(lambda: f64, theta: f64, eps_tail: f64) -> Result<BruteForceTheta> {
    check_lambda_theta(lambda, theta)?;
    check_eps(eps_tail)?;
    let (pmf, cutoff) = truncated_pmf(lambda, 1.0 / theta, eps_tail)?;
    let value = pmf.iter().enumerate().map(|(y, &p)| -p * obs_hessian_theta(y as u64, lambda, theta)).sum();
    Ok(BruteForceTheta { value, cutoff, mass: pmf.iter().sum() })
}
