//! Fixtures shared by the benchmarks in `benches/`.

use nb2_core::{simulate_regression, Dataset, Params};

pub const BETA: [f64; 2] = [0.5, -0.3];
pub const THETA: f64 = 0.8;

/// Simulated two-column design at the benchmark parameters.
pub fn dataset(n: usize) -> Dataset {
    simulate_regression(&BETA, THETA, n, 1).expect("valid simulation parameters")
}

pub fn true_params() -> Params {
    Params::from_slice(&BETA, THETA).expect("valid parameters")
}
