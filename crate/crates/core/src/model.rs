//! The NB2 probability model: data and parameter types, the log link, the
//! probability mass function, and the log-likelihood in both the dispersion
//! (θ) and gamma-shape (α = θ⁻¹) parameterizations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_gamma_unchecked, sum_log_shifted_unchecked};

/// Name given to the auto-prepended column of ones.
pub const INTERCEPT_NAME: &str = "(Intercept)";

/// `|x'β|` above this raises [`Error::Overflow`] instead of saturating `exp`.
pub const MAX_LINEAR_PREDICTOR: f64 = 700.0;

/// Hard cap on the number of terms in any truncated series over counts.
pub const TAIL_TERM_CAP: u64 = 10_000_000;

/// Default relative tolerance for truncating infinite series over counts.
pub const DEFAULT_EPS_TAIL: f64 = 1e-12;

/// Response counts and design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<u64>,
    x: DMatrix<f64>,
    names: Vec<String>,
    intercept: bool,
}

impl Dataset {
    /// Builds a dataset from a complete design matrix. A leading column of
    /// ones is recognised as the intercept.
    pub fn new(y: Vec<u64>, x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let intercept = x.ncols() > 0 && x.column(0).iter().all(|&v| v == 1.0);
        let ds = Dataset { y, x, names, intercept };
        ds.validate()?;
        Ok(ds)
    }

    /// Prepends an intercept column to `regressors`.
    pub fn with_intercept(y: Vec<u64>, regressors: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let n = y.len();
        if regressors.ncols() > 0 && regressors.nrows() != n {
            return Err(Error::Dimension(format!("{} responses but {} design rows", n, regressors.nrows())));
        }
        let p = regressors.ncols() + 1;
        let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { regressors[(i, j - 1)] });
        let mut all_names = Vec::with_capacity(p);
        all_names.push(INTERCEPT_NAME.to_string());
        all_names.extend(names);
        let ds = Dataset { y, x, names: all_names, intercept: true };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let (n, p) = self.x.shape();
        if self.y.len() != n {
            return Err(Error::Dimension(format!("{} responses but {} design rows", self.y.len(), n)));
        }
        if self.names.len() != p {
            return Err(Error::Dimension(format!("{} column names for {} columns", self.names.len(), p)));
        }
        if p == 0 {
            return Err(Error::InvalidData("design matrix has no columns".into()));
        }
        if n < p {
            return Err(Error::InvalidData(format!("need n >= p, got n = {n}, p = {p}")));
        }
        if let Some((idx, _)) = self.x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (row, col) = (idx % n, idx / n);
            return Err(Error::InvalidData(format!(
                "non-finite design entry at row {row}, column '{}'",
                self.names[col]
            )));
        }
        if self.intercept {
            for j in 1..p {
                let col = self.x.column(j);
                if col.iter().all(|&v| v == col[0]) {
                    return Err(Error::InvalidData(format!(
                        "column '{}' is constant and duplicates the intercept",
                        self.names[j]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }
}

/// Regression coefficients and dispersion θ > 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    beta: DVector<f64>,
    theta: f64,
}

impl Params {
    pub fn new(beta: DVector<f64>, theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::Domain { name: "theta", value: theta });
        }
        if let Some(&b) = beta.iter().find(|b| !b.is_finite()) {
            return Err(Error::Domain { name: "beta", value: b });
        }
        Ok(Params { beta, theta })
    }

    pub fn from_slice(beta: &[f64], theta: f64) -> Result<Self> {
        Params::new(DVector::from_column_slice(beta), theta)
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Gamma shape `α = θ⁻¹`.
    pub fn alpha(&self) -> f64 {
        1.0 / self.theta
    }

    pub(crate) fn check_dims(&self, ds: &Dataset) -> Result<()> {
        if self.beta.len() != ds.p() {
            return Err(Error::Dimension(format!(
                "beta has length {} but the design has {} columns",
                self.beta.len(),
                ds.p()
            )));
        }
        Ok(())
    }
}

/// Conditional means `λ_i = exp(x_i'β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkValues {
    eta: Vec<f64>,
    lambda: Vec<f64>,
}

impl LinkValues {
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Linear predictors `x_i'β`.
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }
}

pub fn link_mean(x: &DMatrix<f64>, beta: &DVector<f64>) -> Result<LinkValues> {
    if x.ncols() != beta.len() {
        return Err(Error::Dimension(format!("design has {} columns, beta has length {}", x.ncols(), beta.len())));
    }
    let eta = x * beta;
    let mut lambda = Vec::with_capacity(eta.len());
    for (row, &e) in eta.iter().enumerate() {
        if !e.is_finite() || e.abs() > MAX_LINEAR_PREDICTOR {
            return Err(Error::Overflow { row, eta: e });
        }
        lambda.push(e.exp());
    }
    Ok(LinkValues { eta: eta.as_slice().to_vec(), lambda })
}

fn check_mean_shape(lambda: f64, alpha: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain { name: "lambda", value: lambda });
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Domain { name: "alpha", value: alpha });
    }
    Ok(())
}

/// Log of the NB2 probability mass at `y` for mean `λ` and shape `α`.
pub fn nb_ln_pmf(y: u64, lambda: f64, alpha: f64) -> Result<f64> {
    check_mean_shape(lambda, alpha)?;
    Ok(nb_ln_pmf_unchecked(y, lambda, alpha))
}

pub(crate) fn nb_ln_pmf_unchecked(y: u64, lambda: f64, alpha: f64) -> f64 {
    let yf = y as f64;
    let ln_coef = ln_gamma_unchecked(yf + alpha) - ln_gamma_unchecked(yf + 1.0) - ln_gamma_unchecked(alpha);
    let ln_sum = (lambda + alpha).ln();
    // α ln(α/(λ+α)) = −α ln(1 + λ/α)
    let count_term = if y == 0 { 0.0 } else { yf * (lambda.ln() - ln_sum) };
    ln_coef + count_term - alpha * (lambda / alpha).ln_1p()
}

/// NB2 probability mass
/// `Γ(y+α)/(Γ(y+1)Γ(α)) · (λ/(λ+α))^y · (α/(λ+α))^α`.
pub fn nb_pmf(y: u64, lambda: f64, alpha: f64) -> Result<f64> {
    Ok(nb_ln_pmf(y, lambda, alpha)?.exp())
}

/// The same mass written with a binomial coefficient, defined only for
/// integer shape: `C(y+α−1, y) r^y (1−r)^α` with `r = λ/(λ+α)`.
pub fn nb_pmf_binomial_form(y: u64, lambda: f64, alpha: u64) -> Result<f64> {
    if alpha == 0 {
        return Err(Error::Domain { name: "integer alpha", value: 0.0 });
    }
    let a = alpha as f64;
    check_mean_shape(lambda, a)?;
    // C(y+α−1, y) = Π_{k=1}^{α−1} (y+k)/k
    let ln_binom: f64 = (1..alpha).map(|k| ((y + k) as f64 / k as f64).ln()).sum();
    let r = lambda / (lambda + a);
    let ln_r_pow = if y == 0 { 0.0 } else { y as f64 * r.ln() };
    Ok((ln_binom + ln_r_pow + a * (a / (lambda + a)).ln()).exp())
}

fn check_shape_only(theta: f64) -> Result<()> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::Domain { name: "theta", value: theta });
    }
    Ok(())
}

/// Contribution of one observation to the θ-parameterized log-likelihood.
pub(crate) fn loglik_term(y: u64, eta: f64, lambda: f64, theta: f64) -> f64 {
    let yf = y as f64;
    let inv = 1.0 / theta;
    sum_log_shifted_unchecked(y, inv) - ln_gamma_unchecked(yf + 1.0) + yf * eta + yf * theta.ln()
        - (inv + yf) * (theta * lambda).ln_1p()
}

/// Log-likelihood in the dispersion parameterization, using the gamma-free
/// finite sum in place of `ln Γ(y+θ⁻¹) − ln Γ(θ⁻¹)`.
pub fn loglik(ds: &Dataset, params: &Params) -> Result<f64> {
    params.check_dims(ds)?;
    let link = link_mean(ds.x(), params.beta())?;
    Ok(loglik_with_link(ds, &link, params.theta()))
}

pub(crate) fn loglik_with_link(ds: &Dataset, link: &LinkValues, theta: f64) -> f64 {
    ds.y()
        .iter()
        .zip(link.eta.iter().zip(&link.lambda))
        .map(|(&y, (&eta, &lambda))| loglik_term(y, eta, lambda, theta))
        .sum()
}

/// Log-likelihood in the gamma-shape parameterization `α`.
pub fn loglik_alpha(ds: &Dataset, alpha: f64, beta: &DVector<f64>) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Domain { name: "alpha", value: alpha });
    }
    if beta.len() != ds.p() {
        return Err(Error::Dimension(format!("beta has length {} but the design has {} columns", beta.len(), ds.p())));
    }
    let link = link_mean(ds.x(), beta)?;
    let ln_alpha = alpha.ln();
    Ok(ds
        .y()
        .iter()
        .zip(link.lambda())
        .map(|(&y, &lambda)| {
            let yf = y as f64;
            sum_log_shifted_unchecked(y, alpha) - ln_gamma_unchecked(yf + 1.0) + yf * lambda.ln()
                - yf * ln_alpha
                - (alpha + yf) * (lambda / alpha).ln_1p()
        })
        .sum())
}

/// Survival probability `Pr(Y ≥ j)` under NB2 with mean `λ` and dispersion `θ`.
pub fn tail_prob(j: u64, lambda: f64, theta: f64) -> Result<f64> {
    check_shape_only(theta)?;
    let alpha = 1.0 / theta;
    check_mean_shape(lambda, alpha)?;
    let cdf: f64 = (0..j).map(|k| nb_ln_pmf_unchecked(k, lambda, alpha).exp()).sum();
    Ok((1.0 - cdf).clamp(0.0, 1.0))
}

/// Where a series over counts is cut off, and a bound on the neglected mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCutoff {
    /// Last count included in the truncated sum.
    pub cutoff: u64,
    /// Upper bound on `Pr(Y > cutoff)`.
    pub tail_bound: f64,
}

/// Chooses the truncation point for series over `y ~ NB2(λ, α)`.
///
/// The cutoff is the first count at or above the moment floor
/// `λ + 10·sqrt(λ(1 + λ/α))` whose geometric tail bound
/// `pmf(y+1)/(1 − ρ)` falls below `eps_tail`, where `ρ` bounds every later
/// ratio `pmf(k+1)/pmf(k)`.
pub fn tail_cutoff(lambda: f64, alpha: f64, eps_tail: f64) -> Result<TailCutoff> {
    check_mean_shape(lambda, alpha)?;
    if !(eps_tail.is_finite() && eps_tail > 0.0) {
        return Err(Error::Domain { name: "eps_tail", value: eps_tail });
    }
    let floor = lambda + 10.0 * (lambda * (1.0 + lambda / alpha)).sqrt();
    if floor >= TAIL_TERM_CAP as f64 {
        return Err(Error::TruncationCap { cap: TAIL_TERM_CAP, lambda, alpha });
    }
    let r = lambda / (lambda + alpha);
    let mut y = floor.ceil() as u64;
    let mut next = nb_ln_pmf_unchecked(y + 1, lambda, alpha).exp();
    loop {
        // ratio pmf(k+1)/pmf(k) for k = y+1
        let rho_next = (y as f64 + 1.0 + alpha) / (y as f64 + 2.0) * r;
        let rho = rho_next.max(r);
        if rho < 1.0 {
            let bound = next / (1.0 - rho);
            if bound < eps_tail {
                return Ok(TailCutoff { cutoff: y, tail_bound: bound });
            }
        }
        if y >= TAIL_TERM_CAP {
            return Err(Error::TruncationCap { cap: TAIL_TERM_CAP, lambda, alpha });
        }
        next *= rho_next;
        y += 1;
    }
}

/// Probability masses `pmf(0..=cutoff)` together with the cutoff.
pub(crate) fn truncated_pmf(lambda: f64, alpha: f64, eps_tail: f64) -> Result<(Vec<f64>, TailCutoff)> {
    let cut = tail_cutoff(lambda, alpha, eps_tail)?;
    let pmf = (0..=cut.cutoff).map(|y| nb_ln_pmf_unchecked(y, lambda, alpha).exp()).collect();
    Ok((pmf, cut))
}
