//! Gauss–Kronrod (7, 15) quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QuadratureScheme {
    /// Bisect the panel with the largest error estimate until the total
    /// estimate meets the tolerance.
    AdaptiveInterval,
    /// `max_subdivisions` equal panels per interval, no refinement.
    FixedNodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: QuadratureScheme,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { scheme: QuadratureScheme::AdaptiveInterval, rel_tol: 1e-11, max_subdivisions: 2000 }
    }
}

impl QuadratureSpec {
    fn validate(&self) -> Result<()> {
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) {
            return Err(Error::Domain { name: "quadrature rel_tol", value: self.rel_tol });
        }
        if self.max_subdivisions == 0 {
            return Err(Error::Domain { name: "quadrature max_subdivisions", value: 0.0 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Panel> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let s = f(center - dx) + f(center + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    let value = k * half;
    if !value.is_finite() {
        return Err(Error::NonFinite("quadrature integrand"));
    }
    let error = ((k - g) * half).abs();
    Ok(Panel { a, b, value, error })
}

/// Integrates `f` over consecutive intervals `[breaks[k], breaks[k+1]]`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, breaks: &[f64], spec: &QuadratureSpec) -> Result<Integral> {
    spec.validate()?;
    if breaks.len() < 2 || breaks.windows(2).any(|w| w[0].is_nan() || w[0] >= w[1]) {
        return Err(Error::InvalidData("quadrature breakpoints must be strictly increasing".into()));
    }
    match spec.scheme {
        QuadratureScheme::FixedNodes => {
            let mut value = 0.0;
            let mut error = 0.0;
            let mut panels = 0;
            for w in breaks.windows(2) {
                let width = (w[1] - w[0]) / spec.max_subdivisions as f64;
                for k in 0..spec.max_subdivisions {
                    let a = w[0] + k as f64 * width;
                    let b = if k + 1 == spec.max_subdivisions { w[1] } else { a + width };
                    let p = kronrod(&f, a, b)?;
                    value += p.value;
                    error += p.error;
                    panels += 1;
                }
            }
            let requested = spec.rel_tol * value.abs();
            if error > requested && error > f64::MIN_POSITIVE {
                return Err(Error::Quadrature { achieved: error, requested });
            }
            Ok(Integral { value, error_estimate: error, panels })
        }
        QuadratureScheme::AdaptiveInterval => {
            let mut heap = BinaryHeap::new();
            for w in breaks.windows(2) {
                heap.push(kronrod(&f, w[0], w[1])?);
            }
            let budget = spec.max_subdivisions.max(heap.len());
            loop {
                let value: f64 = heap.iter().map(|p| p.value).sum();
                let error: f64 = heap.iter().map(|p| p.error).sum();
                let requested = spec.rel_tol * value.abs();
                if error <= requested || error <= f64::MIN_POSITIVE {
                    return Ok(Integral { value, error_estimate: error, panels: heap.len() });
                }
                if heap.len() >= budget {
                    return Err(Error::Quadrature { achieved: error, requested });
                }
                let worst = heap.pop().expect("non-empty heap");
                let mid = 0.5 * (worst.a + worst.b);
                if !(worst.a < mid && mid < worst.b) {
                    // Panel can no longer be split in floating point.
                    return Err(Error::Quadrature { achieved: error, requested });
                }
                heap.push(kronrod(&f, worst.a, mid)?);
                heap.push(kronrod(&f, mid, worst.b)?);
            }
        }
    }
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Integral> {
    integrate_pieces(f, &[a, b], spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let spec = QuadratureSpec::default();
        let r = integrate(|x| x.powi(7) - 3.0 * x * x, 0.0, 2.0, &spec).unwrap();
        assert!((r.value - (256.0 / 8.0 - 8.0)).abs() < 1e-12);
        assert_eq!(r.panels, 1);
    }

    #[test]
    fn adaptive_resolves_a_peak() {
        let spec = QuadratureSpec::default();
        let width: f64 = 1e-3;
        let r = integrate(|x| (-(x - 0.3) * (x - 0.3) / (2.0 * width * width)).exp(), 0.0, 1.0, &spec).unwrap();
        let exact = width * (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.value - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn fixed_nodes_reports_insufficient_resolution() {
        let spec = QuadratureSpec { scheme: QuadratureScheme::FixedNodes, rel_tol: 1e-12, max_subdivisions: 1 };
        let err = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, &spec).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
        let spec = QuadratureSpec { max_subdivisions: 20, ..spec };
        let r = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, &spec).unwrap();
        assert!((r.value - 2.0).abs() < 1e-13);
    }

    #[test]
    fn bad_spec_is_rejected() {
        let spec = QuadratureSpec { rel_tol: 0.0, ..Default::default() };
        assert!(integrate(|x| x, 0.0, 1.0, &spec).is_err());
        assert!(integrate_pieces(|x| x, &[0.0, 0.0], &QuadratureSpec::default()).is_err());
    }
}
