//! Scalar special functions and the finite sums that stand in for
//! gamma-function ratios.
//!
//! The finite sums over `j = 0..y` are evaluated by direct summation. Above
//! [`DIRECT_SUM_LIMIT`] terms they switch to the equivalent gamma, digamma or
//! trigamma difference, which is O(1).

use crate::error::{Error, Result};

/// Largest count for which the finite sums are evaluated term by term.
pub const DIRECT_SUM_LIMIT: u64 = 1_000_000;

// Recurrence is applied until the argument reaches this value, after which
// the asymptotic series below are accurate to well under 1e-15.
const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

fn check_positive(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { name, value: x })
    }
}

/// Natural logarithm of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> Result<f64> {
    check_positive("ln_gamma argument", x)?;
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Shift up once: the Lanczos sum loses accuracy near zero.
        return ln_gamma_unchecked(x + 1.0) - x.ln();
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (k, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    HALF_LN_TWO_PI + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Digamma function `Γ'(x)/Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma argument", x)?;
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32_760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 * inv - tail
}

/// Trigamma function, the derivative of [`digamma`], for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive("trigamma argument", x)?;
    Ok(trigamma_unchecked(x))
}

pub(crate) fn trigamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < ASYMPTOTIC_THRESHOLD {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0
            + inv
                * (0.5
                    + inv
                        * (1.0 / 6.0
                            - inv2
                                * (1.0 / 30.0
                                    - inv2
                                        * (1.0 / 42.0
                                            - inv2
                                                * (1.0 / 30.0
                                                    - inv2
                                                        * (5.0 / 66.0
                                                            - inv2 * (691.0 / 2_730.0 - inv2 * 7.0 / 6.0))))))));
    shift + series
}

/// `Σ_{j=0}^{y-1} ln(j + a)`, which equals `ln Γ(y + a) − ln Γ(a)`.
pub fn sum_log_shifted(y: u64, a: f64) -> Result<f64> {
    check_positive("shift a", a)?;
    Ok(sum_log_shifted_unchecked(y, a))
}

pub(crate) fn sum_log_shifted_unchecked(y: u64, a: f64) -> f64 {
    if y > DIRECT_SUM_LIMIT {
        return ln_gamma_unchecked(y as f64 + a) - ln_gamma_unchecked(a);
    }
    (0..y).map(|j| (j as f64 + a).ln()).sum()
}

/// `Σ_{j=0}^{y-1} 1/(j + θ⁻¹)`, the finite form of `Ψ(y + θ⁻¹) − Ψ(θ⁻¹)`.
pub fn sum_recip_shifted(y: u64, theta: f64) -> Result<f64> {
    check_positive("theta", theta)?;
    Ok(sum_recip_unchecked(y, 1.0 / theta))
}

/// Same sum keyed by the shift `a = θ⁻¹` directly.
pub(crate) fn sum_recip_unchecked(y: u64, a: f64) -> f64 {
    if y > DIRECT_SUM_LIMIT {
        return digamma_unchecked(y as f64 + a) - digamma_unchecked(a);
    }
    (0..y).map(|j| 1.0 / (j as f64 + a)).sum()
}

/// `Σ_{j=0}^{y-1} 1/(j + a)²`, which equals `Ψ'(a) − Ψ'(y + a)`.
pub fn sum_recip_sq_shifted(y: u64, a: f64) -> Result<f64> {
    check_positive("shift a", a)?;
    Ok(sum_recip_sq_unchecked(y, a))
}

pub(crate) fn sum_recip_sq_unchecked(y: u64, a: f64) -> f64 {
    if y > DIRECT_SUM_LIMIT {
        return trigamma_unchecked(a) - trigamma_unchecked(y as f64 + a);
    }
    (0..y)
        .map(|j| {
            let d = j as f64 + a;
            1.0 / (d * d)
        })
        .sum()
}

/// `Σ_{j=0}^{y-1} (2j + θ⁻¹)/(j + θ⁻¹)²`, the sum appearing in the second
/// θ-derivative of the log-likelihood.
pub fn sum_trigamma_weights(y: u64, theta: f64) -> Result<f64> {
    check_positive("theta", theta)?;
    Ok(sum_weights_unchecked(y, 1.0 / theta))
}

pub(crate) fn sum_weights_unchecked(y: u64, a: f64) -> f64 {
    if y > DIRECT_SUM_LIMIT {
        return 2.0 * sum_recip_unchecked(y, a) - a * sum_recip_sq_unchecked(y, a);
    }
    (0..y).map(|j| trigamma_weight(j, a)).sum()
}

/// Single weight `(2j + a)/(j + a)²`.
#[inline]
pub(crate) fn trigamma_weight(j: u64, a: f64) -> f64 {
    let j = j as f64;
    let d = j + a;
    (2.0 * j + a) / (d * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn ln_gamma_integers() {
        assert!(ln_gamma(1.0).unwrap().abs() < 1e-14);
        assert!(ln_gamma(2.0).unwrap().abs() < 1e-14);
        assert!(close(ln_gamma(5.0).unwrap(), 24f64.ln(), 1e-14));
        let ln_fact_20: f64 = (1..=20).map(|k| (k as f64).ln()).sum();
        assert!(close(ln_gamma(21.0).unwrap(), ln_fact_20, 1e-14));
    }

    #[test]
    fn domain_errors() {
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(ln_gamma(bad).is_err());
            assert!(digamma(bad).is_err());
            assert!(trigamma(bad).is_err());
        }
        assert!(sum_log_shifted(3, 0.0).is_err());
        assert!(sum_recip_shifted(3, -1.0).is_err());
        assert!(sum_recip_sq_shifted(3, f64::NAN).is_err());
        assert!(sum_trigamma_weights(3, 0.0).is_err());
    }

    #[test]
    fn digamma_known_values() {
        let euler = 0.577_215_664_901_532_9;
        assert!(close(digamma(1.0).unwrap(), -euler, 1e-14));
        assert!((digamma(2.0).unwrap() - digamma(1.0).unwrap() - 1.0).abs() < 1e-12);
        // Ψ(1/2) = −γ − 2 ln 2
        assert!(close(digamma(0.5).unwrap(), -euler - 2.0 * 2f64.ln(), 1e-14));
    }

    #[test]
    fn trigamma_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!(close(trigamma(1.0).unwrap(), pi2_6, 1e-14));
        assert!(close(trigamma(0.5).unwrap(), 3.0 * pi2_6, 1e-14));
        assert!((trigamma(3.0).unwrap() - trigamma(1.0).unwrap() + 1.25).abs() < 1e-12);
    }

    #[test]
    fn empty_sums_are_exactly_zero() {
        assert_eq!(sum_log_shifted(0, 3.7).unwrap(), 0.0);
        assert_eq!(sum_recip_shifted(0, 1.0).unwrap(), 0.0);
        assert_eq!(sum_recip_sq_shifted(0, 1.0).unwrap(), 0.0);
        assert_eq!(sum_trigamma_weights(0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn small_sums_by_hand() {
        assert!((sum_log_shifted(1, 2.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((sum_log_shifted(3, 1.0).unwrap() - 6f64.ln()).abs() < 1e-15);
        assert!((sum_recip_shifted(3, 1.0).unwrap() - 11.0 / 6.0).abs() < 1e-15);
        assert!((sum_recip_shifted(2, 0.5).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!((sum_recip_sq_shifted(2, 1.0).unwrap() - 1.25).abs() < 1e-15);
        assert!((sum_trigamma_weights(2, 1.0).unwrap() - 1.75).abs() < 1e-15);
    }

    #[test]
    fn large_counts_switch_to_difference_forms() {
        let y = DIRECT_SUM_LIMIT + 10;
        let a = 2.5;
        let direct: f64 = (0..y).map(|j| 1.0 / (j as f64 + a)).sum();
        assert!(close(sum_recip_unchecked(y, a), direct, 1e-10));
        let direct_sq: f64 = (0..y).map(|j| (j as f64 + a).powi(-2)).sum();
        assert!(close(sum_recip_sq_unchecked(y, a), direct_sq, 1e-10));
        let direct_log: f64 = (0..y).map(|j| (j as f64 + a).ln()).sum();
        assert!(close(sum_log_shifted_unchecked(y, a), direct_log, 1e-10));
    }
}
