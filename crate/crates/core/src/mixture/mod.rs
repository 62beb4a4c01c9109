//! The Poisson–Gamma mixture behind NB2: a unit-mean Gamma disturbance on
//! the Poisson mean, the mixture integral evaluated by quadrature, brute-force
//! moments, and a seeded sampler.

mod quadrature;
mod sampler;

pub use quadrature::{integrate, integrate_pieces, Integral, QuadratureScheme, QuadratureSpec};
pub use sampler::{sample_nb, NbSampler};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{link_mean, nb_ln_pmf_unchecked, tail_cutoff, Dataset, INTERCEPT_NAME};
use crate::special::ln_gamma_unchecked;

fn check_pos(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { name, value: v })
    }
}

/// Unit-mean Gamma density `α^α/Γ(α) · u^{α−1} e^{−αu}`.
pub fn gamma_density(u: f64, alpha: f64) -> Result<f64> {
    check_pos("u", u)?;
    check_pos("alpha", alpha)?;
    Ok(gamma_density_unchecked(u, alpha))
}

fn gamma_density_unchecked(u: f64, alpha: f64) -> f64 {
    (alpha * alpha.ln() - ln_gamma_unchecked(alpha) + (alpha - 1.0) * u.ln() - alpha * u).exp()
}

/// Poisson mass `lam^y e^{−lam} / y!`.
pub fn poisson_pmf(y: u64, lam: f64) -> Result<f64> {
    check_pos("poisson mean", lam)?;
    Ok(poisson_pmf_unchecked(y, lam))
}

fn poisson_pmf_unchecked(y: u64, lam: f64) -> f64 {
    let yf = y as f64;
    let ln_pow = if y == 0 { 0.0 } else { yf * lam.ln() };
    (ln_pow - lam - ln_gamma_unchecked(yf + 1.0)).exp()
}

// Chernoff bound on the upper tail of a unit-rate Gamma(shape) variable:
// Pr(G > x) ≤ exp(s − x + s ln(x/s)) for x > s.
fn gamma_upper_limit(shape: f64) -> f64 {
    let sd = shape.sqrt();
    let mut x = shape + 10.0 * sd + 10.0;
    while shape - x + shape * (x / shape).ln() > -40.0 {
        x += sd + 1.0;
    }
    x
}

/// Integrates `f` over `(0, ∞)` where `f(x)` behaves like
/// `x^{shape−1} e^{−x}` times something smooth.
///
/// The range is cut at a Chernoff bound (neglected mass below `e^{−40}`
/// of the kernel), panels are centred on the mode, and `[0, 1]` is
/// integrated after `x = t^m` so the power at the origin becomes a
/// non-negative integer power of `t`.
pub fn integrate_gamma_like<F: Fn(f64) -> f64>(f: F, shape: f64, spec: &QuadratureSpec) -> Result<Integral> {
    check_pos("shape", shape)?;
    let upper = gamma_upper_limit(shape);

    let m = if shape.fract() == 0.0 { 1.0 } else { shape.ceil() / shape };
    let near_zero = |t: f64| {
        let x = t.powf(m);
        if x > 0.0 {
            m * t.powf(m - 1.0) * f(x)
        } else {
            0.0
        }
    };
    let head = integrate(near_zero, 0.0, 1.0, spec)?;

    let mode = (shape - 1.0).max(1.0);
    let sd = shape.sqrt();
    let mut breaks = vec![1.0];
    for k in [-10.0, -3.0, 0.0, 3.0, 10.0] {
        let b = mode + k * sd;
        if b > *breaks.last().unwrap() && b < upper {
            breaks.push(b);
        }
    }
    breaks.push(upper);
    let body = integrate_pieces(&f, &breaks, spec)?;

    Ok(Integral {
        value: head.value + body.value,
        error_estimate: head.error_estimate + body.error_estimate,
        panels: head.panels + body.panels,
    })
}

/// `∫₀^∞ Poisson(y | λu) · Gamma(u | α) du` by quadrature, after the change
/// of variable `x = u(λ+α)` that turns the integrand into
/// `x^{y+α−1} e^{−x}` up to a constant.
pub fn mixture_pmf(y: u64, lambda: f64, alpha: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_pos("lambda", lambda)?;
    check_pos("alpha", alpha)?;
    let scale = lambda + alpha;
    let integrand = |x: f64| {
        let u = x / scale;
        poisson_pmf_unchecked(y, lambda * u) * gamma_density_unchecked(u, alpha) / scale
    };
    Ok(integrate_gamma_like(integrand, y as f64 + alpha, spec)?.value)
}

fn truncated_moments(lambda: f64, alpha: f64, eps_tail: f64) -> Result<(f64, f64)> {
    check_pos("lambda", lambda)?;
    check_pos("alpha", alpha)?;
    let cut = tail_cutoff(lambda, alpha, eps_tail)?;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for y in 0..=cut.cutoff {
        let p = nb_ln_pmf_unchecked(y, lambda, alpha).exp();
        let yf = y as f64;
        m1 += yf * p;
        m2 += yf * yf * p;
    }
    Ok((m1, m2))
}

/// Truncated `Σ_y y·pmf(y)`; should reproduce `λ`.
pub fn nb_mean_bruteforce(lambda: f64, alpha: f64, eps_tail: f64) -> Result<f64> {
    Ok(truncated_moments(lambda, alpha, eps_tail)?.0)
}

/// Truncated `Σ_y y²·pmf(y) − mean²`; should reproduce `λ + λ²/α`.
pub fn nb_variance_bruteforce(lambda: f64, alpha: f64, eps_tail: f64) -> Result<f64> {
    let (m1, m2) = truncated_moments(lambda, alpha, eps_tail)?;
    Ok(m2 - m1 * m1)
}

/// Simulates a regression dataset: an intercept plus `beta.len() − 1`
/// standard normal regressors named `x1, x2, …`, and NB2 counts at
/// `(beta, theta)`. Row by row, the regressors are drawn first, then the count.
pub fn simulate_regression(beta: &[f64], theta: f64, n: usize, seed: u64) -> Result<Dataset> {
    if beta.is_empty() {
        return Err(Error::Dimension("beta must have at least one entry".into()));
    }
    if n == 0 {
        return Err(Error::Domain { name: "sample size", value: 0.0 });
    }
    check_pos("theta", theta)?;
    let p = beta.len();
    let mut sampler = NbSampler::new(seed);
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    let b = DVector::from_column_slice(beta);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..p {
            x[(i, j)] = sampler.standard_normal();
        }
        let row = x.rows(i, 1).into_owned();
        let lambda = link_mean(&row, &b)?.lambda()[0];
        y.push(sampler.draw(lambda, theta)?);
    }
    let mut names = vec![INTERCEPT_NAME.to_string()];
    names.extend((1..p).map(|k| format!("x{k}")));
    Dataset::new(y, x, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::nb_pmf;

    #[test]
    fn exponential_special_case() {
        for u in [0.1, 1.0, 3.5] {
            assert!((gamma_density(u, 1.0).unwrap() - (-u).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn poisson_values() {
        assert!((poisson_pmf(0, 2.0).unwrap() - (-2f64).exp()).abs() < 1e-16);
        assert!((poisson_pmf(1, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-16);
        assert!(poisson_pmf(1, 0.0).is_err());
    }

    #[test]
    fn gamma_density_normalised_with_unit_mean() {
        let spec = QuadratureSpec::default();
        for alpha in [0.5, 1.0, 2.0, 10.0] {
            // x = αu
            let mass = integrate_gamma_like(|x| gamma_density_unchecked(x / alpha, alpha) / alpha, alpha, &spec)
                .unwrap()
                .value;
            let mean = integrate_gamma_like(
                |x| (x / alpha) * gamma_density_unchecked(x / alpha, alpha) / alpha,
                alpha + 1.0,
                &spec,
            )
            .unwrap()
            .value;
            assert!((mass - 1.0).abs() < 1e-8, "alpha {alpha}: {mass}");
            assert!((mean - 1.0).abs() < 1e-8, "alpha {alpha}: {mean}");
        }
    }

    #[test]
    fn mixture_hand_points() {
        let spec = QuadratureSpec::default();
        assert!((mixture_pmf(0, 1.0, 2.0, &spec).unwrap() - 4.0 / 9.0).abs() < 1e-8);
        let m = mixture_pmf(3, 2.0, 1.5, &spec).unwrap();
        assert!((m - nb_pmf(3, 2.0, 1.5).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn mixture_approaches_poisson() {
        let spec = QuadratureSpec::default();
        for y in 0..=5 {
            let m = mixture_pmf(y, 1.0, 1e4, &spec).unwrap();
            assert!((m - poisson_pmf(y, 1.0).unwrap()).abs() < 1e-3, "y = {y}");
        }
    }

    #[test]
    fn poisson_normalisation() {
        for lam in [0.1, 1.0, 7.5, 40.0] {
            let top = (lam + 10.0 * f64::sqrt(lam) + 20.0) as u64;
            let total: f64 = (0..=top).map(|y| poisson_pmf(y, lam).unwrap()).sum();
            assert!(total >= 1.0 - 1e-10, "lam {lam}: {total}");
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = simulate_regression(&[0.5, -0.3], 0.8, 200, 11).unwrap();
        let b = simulate_regression(&[0.5, -0.3], 0.8, 200, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.names(), ["(Intercept)", "x1"]);
        assert!(simulate_regression(&[0.5], 0.0, 10, 1).is_err());
    }

    #[test]
    fn moments() {
        assert!((nb_mean_bruteforce(1.0, 1.0, 1e-12).unwrap() - 1.0).abs() < 1e-8);
        assert!((nb_mean_bruteforce(2.5, 1.7, 1e-12).unwrap() - 2.5).abs() < 1e-6);
        assert!((nb_mean_bruteforce(0.01, 5.0, 1e-12).unwrap() - 0.01).abs() < 1e-8);
        assert!((nb_variance_bruteforce(1.0, 1.0, 1e-12).unwrap() - 2.0).abs() < 1e-6);
        assert!((nb_variance_bruteforce(2.0, 4.0, 1e-12).unwrap() - 3.0).abs() < 1e-6);
        assert!((nb_variance_bruteforce(2.0, 1e6, 1e-12).unwrap() - 2.0).abs() < 1e-3);
    }
}
