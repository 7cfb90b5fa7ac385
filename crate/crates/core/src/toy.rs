//! Synthetic one-dimensional regression data drawn from a GP prior.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::basis::{build_basis, BasisMode, Domain};
use crate::error::{invalid, Result};
use crate::kernels::{Hyperparams, KernelSpec};

#[derive(Clone, Debug)]
pub struct ToyData {
    /// `n × 1` inputs, uniform on `[-1, 1]`.
    pub x: DMatrix<f64>,
    /// Noisy targets.
    pub y: DVector<f64>,
    /// Latent function values.
    pub f: DVector<f64>,
}

/// Generating hyperparameters: σ² = 1, ℓ = 0.1, σ_n = 0.2.
pub fn toy_theta() -> Hyperparams {
    Hyperparams::new(1.0, 0.1, 0.04)
}

/// Draws `n` points from a squared-exponential GP prior with [`toy_theta`].
///
/// The latent function is a Karhunen–Loève draw on `[-2, 2]` with 512 basis
/// functions, far past the point where the spectral weights vanish, so it is
/// indistinguishable from an exact prior draw on `[-1, 1]`.
pub fn toy_replica(n: usize, seed: u64) -> Result<ToyData> {
    toy_replica_with(n, seed, &KernelSpec::SquaredExponential, &toy_theta())
}

pub fn toy_replica_with(n: usize, seed: u64, spec: &KernelSpec, theta: &Hyperparams) -> Result<ToyData> {
    if n == 0 {
        return Err(invalid("toy data needs n >= 1"));
    }
    theta.validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..=1.0));
    let basis = build_basis(Domain::interval(0.0, 2.0)?, 512, BasisMode::Sorted)?;
    let f = basis.sample_prior(spec, theta, &x, rng.random())?;
    let noise = Normal::new(0.0, theta.noise.sqrt()).map_err(|e| invalid(e.to_string()))?;
    let y = DVector::from_fn(n, |i, _| f[i] + noise.sample(&mut rng));
    Ok(ToyData { x, y, f })
}
