//! Numerical adjudication of the gamma/digamma/trigamma identities used when
//! rewriting the NB2 likelihood and its θ-derivatives.
//!
//! Every chained equality is broken into labeled members and every pair of
//! members gets its own residual. Nothing in a chain is presumed to hold;
//! each pair carries an [`Expectation`] that only records which pairs a
//! correct derivation makes literally true.

use serde::{Deserialize, Serialize};

use crate::finite_diff::{richardson_diff, richardson_second_diff};
use crate::special::{
    digamma_unchecked, ln_gamma_unchecked, sum_recip_sq_unchecked, sum_recip_unchecked, sum_weights_unchecked,
    trigamma_unchecked,
};

/// Default grid counts.
pub const DEFAULT_COUNTS: [u64; 6] = [0, 1, 2, 5, 10, 50];
/// Default grid values for θ (or α).
pub const DEFAULT_PARAMS: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 10.0];

/// Tolerance for pairs that are exact up to rounding.
pub const DEFAULT_TOL_EXACT: f64 = 1e-9;
/// Tolerance for pairs whose reference member is a first derivative by
/// finite differences.
pub const DEFAULT_TOL_FIRST: f64 = 1e-6;
/// Same for second derivatives.
pub const DEFAULT_TOL_SECOND: f64 = 1e-4;
/// Tolerance for the purely algebraic θ-rewrites of the trigamma sum.
pub const DEFAULT_TOL_ALGEBRA: f64 = 1e-12;

/// Finite-difference steps are these multiples of θ. The members being
/// differentiated are functions of θ⁻¹, so θ is their natural length scale.
const FIRST_STEP_SCALE: f64 = 1e-3;
const SECOND_STEP_SCALE: f64 = 1e-2;

/// A residual pair must exceed this somewhere on the grid to count as
/// demonstrably different.
pub const DISAGREEMENT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IdentityId {
    /// `Ψ(y+α) − Ψ(α) = Σ 1/(j+α)`
    DigammaSum,
    /// `d/dθ ln[Γ(y+θ⁻¹)/Γ(θ⁻¹)]` vs `Ψ(y+θ⁻¹) − Ψ(θ⁻¹)` vs `−θ⁻² Σ 1/(j+θ⁻¹)`
    DigammaChain,
    /// `d²/dθ² ln[Γ(y+θ⁻¹)/Γ(θ⁻¹)]` vs `Ψ'(y+θ⁻¹) − Ψ'(θ⁻¹)` vs `θ⁻³ Σ (2j+θ⁻¹)/(j+θ⁻¹)²`
    TrigammaChain,
    /// `Ψ'(y+α) − Ψ'(α) = −Σ 1/(j+α)²` and its θ-rewrites
    TrigammaSum,
}

/// Which axis the grid's real parameter is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridParam {
    Alpha,
    Theta,
}

/// One `(y, θ)` or `(y, α)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub y: u64,
    pub value: f64,
}

/// Cartesian product of counts and parameter values.
pub fn grid(counts: &[u64], params: &[f64]) -> Vec<GridPoint> {
    counts.iter().flat_map(|&y| params.iter().map(move |&value| GridPoint { y, value })).collect()
}

pub fn default_grid() -> Vec<GridPoint> {
    grid(&DEFAULT_COUNTS, &DEFAULT_PARAMS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Expectation {
    /// A correct derivation makes this pair literally equal.
    Holds,
    /// The pair is part of the chain under dispute; it is reported, not
    /// required to hold.
    Disputed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Holds { tol: f64 },
    Fails { max_residual: f64 },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    /// `"a-c"`-style label naming the two members.
    pub pair: String,
    pub expectation: Expectation,
    pub tol: f64,
    pub max_residual: f64,
    pub verdict: Verdict,
}

impl PairVerdict {
    /// Whether the pair meets its expectation. Disputed pairs always do.
    pub fn meets_expectation(&self) -> bool {
        match self.expectation {
            Expectation::Holds => self.verdict.holds(),
            Expectation::Disputed => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub y: u64,
    pub param: f64,
    /// Labeled chain members.
    pub values: Vec<(String, f64)>,
    /// `|difference|` for each pair, in the same order as the report's pairs.
    pub residuals: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: IdentityId,
    pub grid_param: GridParam,
    /// Meaning of each member label.
    pub members: Vec<(String, String)>,
    pub points: Vec<PointResult>,
    pub pairs: Vec<PairVerdict>,
}

impl IdentityReport {
    pub fn pair(&self, label: &str) -> Option<&PairVerdict> {
        self.pairs.iter().find(|p| p.pair == label)
    }

    /// True when every pair expected to hold does.
    pub fn expected_pairs_hold(&self) -> bool {
        self.pairs.iter().all(PairVerdict::meets_expectation)
    }
}

struct PairSpec {
    first: usize,
    second: usize,
    expectation: Expectation,
    tol: f64,
}

fn build_report<F>(
    identity: IdentityId,
    grid_param: GridParam,
    members: &[(&str, &str)],
    pairs: &[PairSpec],
    grid: &[GridPoint],
    eval: F,
) -> IdentityReport
where
    F: Fn(u64, f64) -> Vec<f64>,
{
    let label = |p: &PairSpec| format!("{}-{}", members[p.first].0, members[p.second].0);
    let mut max_res = vec![0.0f64; pairs.len()];
    let mut points = Vec::with_capacity(grid.len());
    for pt in grid {
        if !(pt.value.is_finite() && pt.value > 0.0) {
            points.push(PointResult {
                y: pt.y,
                param: pt.value,
                values: Vec::new(),
                residuals: Vec::new(),
                invalid: Some(format!("parameter must be positive and finite, got {}", pt.value)),
            });
            continue;
        }
        let vals = eval(pt.y, pt.value);
        if let Some(bad) = vals.iter().position(|v| !v.is_finite()) {
            points.push(PointResult {
                y: pt.y,
                param: pt.value,
                values: Vec::new(),
                residuals: Vec::new(),
                invalid: Some(format!("member '{}' is not finite", members[bad].0)),
            });
            continue;
        }
        let residuals = pairs
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let r = (vals[p.first] - vals[p.second]).abs();
                max_res[k] = max_res[k].max(r);
                (label(p), r)
            })
            .collect();
        points.push(PointResult {
            y: pt.y,
            param: pt.value,
            values: members.iter().zip(&vals).map(|((m, _), &v)| (m.to_string(), v)).collect(),
            residuals,
            invalid: None,
        });
    }
    let pairs = pairs
        .iter()
        .zip(&max_res)
        .map(|(p, &max_residual)| PairVerdict {
            pair: label(p),
            expectation: p.expectation,
            tol: p.tol,
            max_residual,
            verdict: if max_residual <= p.tol {
                Verdict::Holds { tol: p.tol }
            } else {
                Verdict::Fails { max_residual }
            },
        })
        .collect();
    IdentityReport {
        identity,
        grid_param,
        members: members.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        points,
        pairs,
    }
}

/// `ln[Γ(y+θ⁻¹)/Γ(θ⁻¹)]` through the gamma function only.
fn ln_gamma_ratio(y: u64, theta: f64) -> f64 {
    let inv = 1.0 / theta;
    ln_gamma_unchecked(y as f64 + inv) - ln_gamma_unchecked(inv)
}

/// Compares `Ψ(y+α) − Ψ(α)` with `Σ_{j<y} 1/(j+α)` over `(y, α)` points.
pub fn check_digamma_sum(grid: &[GridPoint], tol: f64) -> IdentityReport {
    build_report(
        IdentityId::DigammaSum,
        GridParam::Alpha,
        &[("a", "digamma(y+alpha) - digamma(alpha)"), ("b", "sum_j 1/(j+alpha)")],
        &[PairSpec { first: 0, second: 1, expectation: Expectation::Holds, tol }],
        grid,
        |y, alpha| {
            let a = digamma_unchecked(y as f64 + alpha) - digamma_unchecked(alpha);
            vec![a, sum_recip_unchecked(y, alpha)]
        },
    )
}

/// Three members over `(y, θ)`: `a` is the θ-derivative of the gamma ratio by
/// finite differences, `b` the digamma difference, `c` the gamma-free sum
/// with its `−θ⁻²` chain factor. Only `a`–`c` is expected to hold.
pub fn check_digamma_chain(grid: &[GridPoint], tol: f64) -> IdentityReport {
    build_report(
        IdentityId::DigammaChain,
        GridParam::Theta,
        &[
            ("a", "d/dtheta ln[G(y+1/theta)/G(1/theta)] by finite differences"),
            ("b", "digamma(y+1/theta) - digamma(1/theta)"),
            ("c", "-theta^-2 sum_j 1/(j+1/theta)"),
        ],
        &[
            PairSpec { first: 0, second: 1, expectation: Expectation::Disputed, tol },
            PairSpec { first: 0, second: 2, expectation: Expectation::Holds, tol },
            PairSpec { first: 1, second: 2, expectation: Expectation::Disputed, tol },
        ],
        grid,
        |y, theta| {
            let inv = 1.0 / theta;
            let a = richardson_diff(|t| ln_gamma_ratio(y, t), theta, FIRST_STEP_SCALE * theta).unwrap_or(f64::NAN);
            let b = digamma_unchecked(y as f64 + inv) - digamma_unchecked(inv);
            let c = -inv * inv * sum_recip_unchecked(y, inv);
            vec![a, b, c]
        },
    )
}

/// Second-derivative analogue of [`check_digamma_chain`]: `a` by second
/// finite differences, `b` the trigamma difference, `c` the weighted sum.
pub fn check_trigamma_chain(grid: &[GridPoint], tol: f64) -> IdentityReport {
    build_report(
        IdentityId::TrigammaChain,
        GridParam::Theta,
        &[
            ("a", "d2/dtheta2 ln[G(y+1/theta)/G(1/theta)] by finite differences"),
            ("b", "trigamma(y+1/theta) - trigamma(1/theta)"),
            ("c", "theta^-3 sum_j (2j+1/theta)/(j+1/theta)^2"),
        ],
        &[
            PairSpec { first: 0, second: 1, expectation: Expectation::Disputed, tol },
            PairSpec { first: 0, second: 2, expectation: Expectation::Holds, tol },
            PairSpec { first: 1, second: 2, expectation: Expectation::Disputed, tol },
        ],
        grid,
        |y, theta| {
            let inv = 1.0 / theta;
            let a =
                richardson_second_diff(|t| ln_gamma_ratio(y, t), theta, SECOND_STEP_SCALE * theta).unwrap_or(f64::NAN);
            let b = trigamma_unchecked(y as f64 + inv) - trigamma_unchecked(inv);
            let c = inv * inv * inv * sum_weights_unchecked(y, inv);
            vec![a, b, c]
        },
    )
}

/// Compares `Ψ'(y+α) − Ψ'(α)` with `−Σ 1/(j+α)²`, plus the two θ-rewrites
/// `−θ²Σ 1/(θj+1)²` and `−Σ 1/(j+θ⁻¹)²` evaluated at `θ = α⁻¹`.
pub fn check_trigamma_sum(grid: &[GridPoint], tol: f64) -> IdentityReport {
    build_report(
        IdentityId::TrigammaSum,
        GridParam::Alpha,
        &[
            ("a", "trigamma(y+alpha) - trigamma(alpha)"),
            ("b", "-sum_j 1/(j+alpha)^2"),
            ("c", "-theta^2 sum_j 1/(theta j+1)^2 at theta = 1/alpha"),
            ("d", "-sum_j 1/(j+1/theta)^2 at theta = 1/alpha"),
        ],
        &[
            PairSpec { first: 0, second: 1, expectation: Expectation::Holds, tol },
            PairSpec { first: 1, second: 2, expectation: Expectation::Holds, tol: DEFAULT_TOL_ALGEBRA },
            PairSpec { first: 2, second: 3, expectation: Expectation::Holds, tol: DEFAULT_TOL_ALGEBRA },
        ],
        grid,
        |y, alpha| {
            let theta = 1.0 / alpha;
            let a = trigamma_unchecked(y as f64 + alpha) - trigamma_unchecked(alpha);
            let b = -sum_recip_sq_unchecked(y, alpha);
            let c = -theta
                * theta
                * (0..y)
                    .map(|j| {
                        let d = theta * j as f64 + 1.0;
                        1.0 / (d * d)
                    })
                    .sum::<f64>();
            let d = -sum_recip_sq_unchecked(y, 1.0 / theta);
            vec![a, b, c, d]
        },
    )
}

/// Tolerances for [`check_all`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityTolerances {
    pub exact: f64,
    pub first: f64,
    pub second: f64,
}

impl Default for IdentityTolerances {
    fn default() -> Self {
        IdentityTolerances { exact: DEFAULT_TOL_EXACT, first: DEFAULT_TOL_FIRST, second: DEFAULT_TOL_SECOND }
    }
}

/// Runs all four checks on one grid; the parameter values are read as α for
/// the sum identities and θ for the chains.
pub fn check_all(grid: &[GridPoint], tol: IdentityTolerances) -> Vec<IdentityReport> {
    vec![
        check_digamma_sum(grid, tol.exact),
        check_digamma_chain(grid, tol.first),
        check_trigamma_chain(grid, tol.second),
        check_trigamma_sum(grid, tol.exact),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(report: &IdentityReport, idx: usize, member: &str) -> f64 {
        report.points[idx].values.iter().find(|(m, _)| m == member).unwrap().1
    }

    fn residual(report: &IdentityReport, idx: usize, pair: &str) -> f64 {
        report.points[idx].residuals.iter().find(|(m, _)| m == pair).unwrap().1
    }

    #[test]
    fn zero_count_collapses_every_chain() {
        let g = grid(&[0], &[0.3, 1.0, 7.0]);
        for report in check_all(&g, IdentityTolerances::default()) {
            for pt in &report.points {
                assert!(pt.residuals.iter().all(|(_, r)| *r < 1e-9), "{:?}", report.identity);
            }
            assert!(report.expected_pairs_hold());
        }
    }

    #[test]
    fn digamma_sum_hand_point() {
        let r = check_digamma_sum(&grid(&[3], &[1.0]), 1e-10);
        assert!((value(&r, 0, "b") - 11.0 / 6.0).abs() < 1e-15);
        assert!(residual(&r, 0, "a-b") < 1e-10);
    }

    #[test]
    fn digamma_chain_unit_point() {
        let r = check_digamma_chain(&grid(&[1], &[1.0]), 1e-6);
        assert!((value(&r, 0, "a") + 1.0).abs() < 1e-9);
        assert!((value(&r, 0, "b") - 1.0).abs() < 1e-14);
        assert!((value(&r, 0, "c") + 1.0).abs() < 1e-15);
        assert!(residual(&r, 0, "a-c") < 1e-6);
        assert!((residual(&r, 0, "b-c") - 2.0).abs() < 1e-14);
    }

    #[test]
    fn trigamma_chain_unit_point() {
        let r = check_trigamma_chain(&grid(&[1], &[1.0]), 1e-4);
        assert!((value(&r, 0, "a") - 1.0).abs() < 1e-6);
        assert!((value(&r, 0, "b") + 1.0).abs() < 1e-13);
        assert!((value(&r, 0, "c") - 1.0).abs() < 1e-15);
        assert!((residual(&r, 0, "b-c") - 2.0).abs() < 1e-13);
    }

    #[test]
    fn trigamma_sum_hand_point() {
        let r = check_trigamma_sum(&grid(&[2], &[1.0]), 1e-10);
        assert!((value(&r, 0, "a") + 1.25).abs() < 1e-12);
        assert!((value(&r, 0, "b") + 1.25).abs() < 1e-15);
        assert!(r.expected_pairs_hold());
    }

    #[test]
    fn invalid_points_are_marked_not_dropped() {
        let r = check_digamma_sum(&[GridPoint { y: 2, value: -1.0 }, GridPoint { y: 2, value: 1.0 }], 1e-9);
        assert_eq!(r.points.len(), 2);
        assert!(r.points[0].invalid.is_some());
        assert!(r.points[1].invalid.is_none());
    }

    #[test]
    fn reports_are_deterministic() {
        let g = default_grid();
        let a = check_all(&g, IdentityTolerances::default());
        let b = check_all(&g, IdentityTolerances::default());
        assert_eq!(a, b);
    }

    #[test]
    fn residuals_are_non_negative_and_complete() {
        for report in check_all(&default_grid(), IdentityTolerances::default()) {
            let n_pairs = report.pairs.len();
            for pt in &report.points {
                assert_eq!(pt.residuals.len(), n_pairs);
                assert!(pt.residuals.iter().all(|(_, r)| *r >= 0.0));
            }
        }
    }
}
