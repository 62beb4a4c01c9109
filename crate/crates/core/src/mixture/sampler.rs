//! Seeded NB2 sampling through the Poisson–Gamma composition.
//!
//! Stream layout: `NbSampler::new(seed)` is ChaCha8 seeded with
//! `seed_from_u64(seed)` on stream 0. `NbSampler::with_stream(seed, k)`
//! selects ChaCha stream `k` of the same key, so independent workers can
//! draw from non-overlapping sequences. Each NB draw consumes one Gamma
//! variate (Marsaglia–Tsang, via `rand_distr`) followed by one Poisson
//! variate; the `rand_distr` version is pinned so the mapping is stable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NbSampler {
    rng: ChaCha8Rng,
}

impl NbSampler {
    pub fn new(seed: u64) -> Self {
        NbSampler { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NbSampler { rng }
    }

    /// One draw: `u ~ Gamma(shape θ⁻¹, scale θ)`, then `y ~ Poisson(λu)`.
    pub fn draw(&mut self, lambda: f64, theta: f64) -> Result<u64> {
        let gamma = mixing_gamma(lambda, theta)?;
        Ok(self.draw_with(&gamma, lambda))
    }

    fn draw_with(&mut self, gamma: &Gamma<f64>, lambda: f64) -> u64 {
        let u: f64 = gamma.sample(&mut self.rng);
        let mean = lambda * u;
        if mean.is_nan() || mean <= 0.0 {
            return 0;
        }
        match Poisson::new(mean) {
            Ok(p) => p.sample(&mut self.rng) as u64,
            Err(_) => 0,
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Draws `n` counts sharing one `(λ, θ)`.
    pub fn sample(&mut self, lambda: f64, theta: f64, n: usize) -> Result<Vec<u64>> {
        let gamma = mixing_gamma(lambda, theta)?;
        Ok((0..n).map(|_| self.draw_with(&gamma, lambda)).collect())
    }
}

fn mixing_gamma(lambda: f64, theta: f64) -> Result<Gamma<f64>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain { name: "lambda", value: lambda });
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::Domain { name: "theta", value: theta });
    }
    Gamma::new(1.0 / theta, theta).map_err(|_| Error::Domain { name: "theta", value: theta })
}

/// `n` NB2(λ, θ) counts from a fresh sampler seeded with `seed`.
pub fn sample_nb(lambda: f64, theta: f64, seed: u64, n: usize) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::Domain { name: "sample size", value: 0.0 });
    }
    NbSampler::new(seed).sample(lambda, theta, n)
}
