//! Relative Gaussian noise: `y = Kx + ν (‖Kx‖ / ‖e‖) e` with `e ~ N(0, I)`,
//! so `‖y − Kx‖ / ‖Kx‖ = ν` holds for every realization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Observation};
use crate::operators::LinearOperator;
use crate::vector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub nu: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(nu: f64, seed: u64) -> Result<Self> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(Error::param("nu", format!("must be >= 0, got {nu}")));
        }
        Ok(Self { nu, seed })
    }

    /// Standard normal draws from the seeded generator.
    pub fn realization(&self, len: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}

/// Simulated measurement of `x`. When `ν = 0` or `Kx = 0` the clean data are
/// returned unchanged.
pub fn corrupt(x: &Image, k: &dyn LinearOperator, noise: &NoiseModel) -> Result<Observation> {
    let clean = k.observe(x)?;
    let signal = vector::norm2(clean.as_slice());
    if noise.nu == 0.0 || signal == 0.0 {
        return Ok(clean);
    }
    let e = noise.realization(clean.len());
    let scale = noise.nu * signal / vector::norm2(&e);
    let shape = clean.shape();
    let values = clean.into_vec().into_iter().zip(&e).map(|(v, ei)| v + scale * ei).collect();
    Observation::new(shape, values)
}

/// `‖y − Kx‖ / ‖Kx‖` for a measurement produced from `x`.
pub fn relative_noise_level(y: &Observation, x: &Image, k: &dyn LinearOperator) -> Result<f64> {
    let clean = k.observe(x)?;
    Ok(vector::distance(y.as_slice(), clean.as_slice()) / vector::norm2(clean.as_slice()))
}
