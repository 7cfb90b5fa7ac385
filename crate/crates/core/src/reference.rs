//! Baselines: the exact dense GP and the sparse-spectrum GP (SSGP).
//!
//! The dense GP is `O(n³)` and serves as the correctness oracle for the
//! reduced-rank model. SSGP approximates the kernel by a Monte-Carlo sum over
//! frequencies drawn from the spectral density,
//! `k(x, x') ≈ (σ²/h) Σ_r cos(2π s_rᵀ(x − x'))`, and reuses the same Woodbury
//! machinery with the trigonometric features `[cos(2π s_rᵀx), sin(2π s_rᵀx)]`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{invalid, GpError, Result};
use crate::kernels::{component_kernel, component_kernel_dlengthscale, Hyperparams, KernelSpec};
use crate::linalg::{cholesky_jittered, log_det};
use crate::model::{Prediction, Summary, Woodbury};

/// Largest training set accepted by the dense GP.
pub const FULL_GP_MAX_N: usize = 10_000;

fn sq_dist(x: &DMatrix<f64>, i: usize, z: &DMatrix<f64>, j: usize) -> f64 {
    (0..x.ncols()).map(|k| (x[(i, k)] - z[(j, k)]).powi(2)).sum()
}

/// Dense cross-covariance `K[i][j] = k(‖x_i − z_j‖)`.
pub fn kernel_matrix(spec: &KernelSpec, theta: &Hyperparams, x: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), z.nrows(), |i, j| {
        let r = sq_dist(x, i, z, j).sqrt();
        spec.components()
            .iter()
            .zip(&theta.components)
            .map(|(k, p)| component_kernel(k, p.magnitude, p.lengthscale, r))
            .sum()
    })
}

fn check_training(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(invalid(format!("{} input rows, {} targets", x.nrows(), y.len())));
    }
    if x.nrows() > FULL_GP_MAX_N {
        return Err(GpError::Resource(format!(
            "dense GP limited to {FULL_GP_MAX_N} points, got {}",
            x.nrows()
        )));
    }
    if x.nrows() > 3000 {
        log::warn!("dense GP with n = {} is O(n³)", x.nrows());
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("training data must be finite"));
    }
    Ok(())
}

struct DenseFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
    nlml: f64,
}

fn dense_factor(spec: &KernelSpec, theta: &Hyperparams, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DenseFactor> {
    theta.validate(spec)?;
    check_training(x, y)?;
    let mut q = kernel_matrix(spec, theta, x, x);
    for i in 0..q.nrows() {
        q[(i, i)] += theta.noise;
    }
    let (chol, _) = cholesky_jittered(&q).ok_or_else(|| GpError::Conditioning { theta: theta.to_string() })?;
    let alpha = chol.solve(y);
    let n = y.len() as f64;
    let nlml = 0.5 * log_det(&chol) + 0.5 * y.dot(&alpha) + 0.5 * n * (2.0 * PI).ln();
    Ok(DenseFactor { chol, alpha, nlml })
}

/// Exact negative log marginal likelihood.
pub fn full_gp_nlml(x: &DMatrix<f64>, y: &DVector<f64>, spec: &KernelSpec, theta: &Hyperparams) -> Result<f64> {
    Ok(dense_factor(spec, theta, x, y)?.nlml)
}

/// Exact NLML and its gradient in log-parameter space, from
/// `∂L/∂θ = ½ tr((Q⁻¹ − ααᵀ) ∂Q/∂θ)`.
pub fn full_gp_nlml_with_grad(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &KernelSpec,
    theta: &Hyperparams,
) -> Result<(f64, Vec<f64>)> {
    let f = dense_factor(spec, theta, x, y)?;
    let n = y.len();
    let mut w = f.chol.inverse();
    w -= &f.alpha * f.alpha.transpose();
    let nc = spec.num_components();
    let mut grad = vec![0.0; 2 * nc + 1];
    for i in 0..n {
        for j in 0..=i {
            let r = sq_dist(x, i, x, j).sqrt();
            let weight = if i == j { 0.5 * w[(i, i)] } else { w[(i, j)] };
            for (c, (k, p)) in spec.components().iter().zip(&theta.components).enumerate() {
                grad[2 * c] += weight * component_kernel(k, p.magnitude, p.lengthscale, r);
                grad[2 * c + 1] += weight * p.lengthscale * component_kernel_dlengthscale(k, p.magnitude, p.lengthscale, r);
            }
        }
    }
    grad[2 * nc] = 0.5 * theta.noise * w.trace();
    Ok((f.nlml, grad))
}

/// Exact posterior mean and variances at `x_star`.
pub fn full_gp_predict(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &KernelSpec,
    theta: &Hyperparams,
    x_star: &DMatrix<f64>,
) -> Result<Prediction> {
    let f = dense_factor(spec, theta, x, y)?;
    if x_star.ncols() != x.ncols() {
        return Err(invalid("test inputs have a different dimension from the training inputs"));
    }
    let ks = kernel_matrix(spec, theta, x, x_star);
    let mean = ks.tr_mul(&f.alpha);
    let v = f
        .chol
        .l_dirty()
        .solve_lower_triangular(&ks)
        .expect("Cholesky factor has a positive diagonal");
    let prior = theta.total_magnitude();
    let var = DVector::from_iterator(x_star.nrows(), v.column_iter().map(|c| (prior - c.norm_squared()).max(0.0)));
    Ok(Prediction::new(mean, var, theta.noise))
}

/// Frequencies for the sparse-spectrum approximation.
///
/// Stored at unit length-scale; the points used for a given `ℓ` are
/// `s_r = ω_r / (2π ℓ)`, so that `2π s_r` is distributed as the spectral
/// density of the kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralPoints {
    /// `h × d` unit-length-scale angular frequencies `ω_r`.
    pub unit_frequencies: DMatrix<f64>,
    pub seed: u64,
}

impl SpectralPoints {
    /// Draws `h` frequencies from the normalized spectral density of a
    /// single-component kernel: Gaussian for SE, multivariate Student-t with
    /// `2ν` degrees of freedom for Matérn.
    pub fn sample(spec: &KernelSpec, h: usize, d: usize, seed: u64) -> Result<Self> {
        if h == 0 || d == 0 {
            return Err(invalid("SSGP needs h >= 1 spectral points and d >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nu = match spec {
            KernelSpec::SquaredExponential => None,
            KernelSpec::Matern(s) => Some(s.nu()),
            KernelSpec::Sum(_) => {
                return Err(GpError::UnsupportedKernel("SSGP supports single-component kernels only".into()))
            }
        };
        let chi = nu.map(|nu| ChiSquared::new(2.0 * nu).expect("positive degrees of freedom"));
        let mut w = DMatrix::zeros(h, d);
        for r in 0..h {
            let scale = match &chi {
                Some(chi) => {
                    let u: f64 = chi.sample(&mut rng);
                    (u / (2.0 * nu.unwrap_or(0.0))).sqrt().recip()
                }
                None => 1.0,
            };
            for k in 0..d {
                let g: f64 = StandardNormal.sample(&mut rng);
                w[(r, k)] = g * scale;
            }
        }
        Ok(SpectralPoints {
            unit_frequencies: w,
            seed,
        })
    }

    /// Uses the given unit-length-scale angular frequencies as they are.
    pub fn from_frequencies(unit_frequencies: DMatrix<f64>) -> Result<Self> {
        if unit_frequencies.nrows() == 0 || unit_frequencies.ncols() == 0 {
            return Err(invalid("need at least one spectral point"));
        }
        Ok(SpectralPoints {
            unit_frequencies,
            seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.unit_frequencies.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.unit_frequencies.ncols()
    }

    /// Spectral points `s_r` (cycles per unit input) at length-scale `ℓ`.
    pub fn points(&self, lengthscale: f64) -> DMatrix<f64> {
        &self.unit_frequencies / (2.0 * PI * lengthscale)
    }

    /// Phases `u[i][r] = ω_rᵀ x_i / ℓ = 2π s_rᵀ x_i`.
    fn phases(&self, lengthscale: f64, x: &DMatrix<f64>) -> DMatrix<f64> {
        (x * self.unit_frequencies.transpose()) / lengthscale
    }

    /// Feature matrix with columns `cos(u_r), sin(u_r)` interleaved.
    pub fn features(&self, lengthscale: f64, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(invalid(format!("inputs have {} columns, spectral points {}", x.ncols(), self.dim())));
        }
        let u = self.phases(lengthscale, x);
        let h = self.len();
        Ok(DMatrix::from_fn(x.nrows(), 2 * h, |i, c| {
            let v = u[(i, c / 2)];
            if c % 2 == 0 {
                v.cos()
            } else {
                v.sin()
            }
        }))
    }
}

fn single_component(spec: &KernelSpec, theta: &Hyperparams) -> Result<()> {
    if matches!(spec, KernelSpec::Sum(_)) {
        return Err(GpError::UnsupportedKernel("SSGP supports single-component kernels only".into()));
    }
    theta.validate(spec)
}

/// `k_SSGP(x, x') = (σ²/h) Σ_r cos(2π s_rᵀ(x − x'))`.
pub fn ssgp_kernel_eval(sp: &SpectralPoints, theta: &Hyperparams, x: &[f64], xp: &[f64]) -> Result<f64> {
    if x.len() != sp.dim() || xp.len() != sp.dim() {
        return Err(invalid("point dimension does not match the spectral points"));
    }
    let ell = theta.lengthscale();
    let h = sp.len();
    let sum: f64 = (0..h)
        .map(|r| {
            let u: f64 = (0..sp.dim()).map(|k| sp.unit_frequencies[(r, k)] * (x[k] - xp[k])).sum();
            (u / ell).cos()
        })
        .sum();
    Ok(theta.magnitude() * (sum / h as f64))
}

/// Training data and spectral points for an SSGP model.
#[derive(Clone, Debug)]
pub struct SsgpFit {
    pub points: SpectralPoints,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl SsgpFit {
    pub fn new(points: SpectralPoints, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.nrows() != y.len() {
            return Err(invalid(format!("{} input rows, {} targets", x.nrows(), y.len())));
        }
        if x.ncols() != points.dim() {
            return Err(invalid("input dimension does not match the spectral points"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("training data must be finite"));
        }
        Ok(SsgpFit { points, x, y })
    }

    /// Sufficient statistics of the features at length-scale `ℓ`.
    pub fn summary(&self, lengthscale: f64) -> Summary {
        let phi = self.points.features(lengthscale, &self.x).expect("dimension checked at construction");
        Summary::from_features(&phi, &self.y)
    }

    fn factor(&self, spec: &KernelSpec, theta: &Hyperparams) -> Result<(DMatrix<f64>, Summary, Woodbury)> {
        single_component(spec, theta)?;
        let phi = self.points.features(theta.lengthscale(), &self.x)?;
        let summary = Summary::from_features(&phi, &self.y);
        let s = vec![theta.magnitude() / self.points.len() as f64; 2 * self.points.len()];
        let wb = Woodbury::new(&summary, &s, theta.noise, theta)?;
        Ok((phi, summary, wb))
    }

    pub fn nlml(&self, spec: &KernelSpec, theta: &Hyperparams) -> Result<f64> {
        Ok(self.factor(spec, theta)?.2.nlml)
    }

    /// NLML and its gradient over `[log σ², log ℓ, log σ_n²]`.
    pub fn nlml_with_grad(&self, spec: &KernelSpec, theta: &Hyperparams) -> Result<(f64, Vec<f64>)> {
        let (phi, summary, wb) = self.factor(spec, theta)?;
        let (dlogs, dv) = wb.gradient_parts(&summary);
        let d_log_mag: f64 = dlogs.iter().sum();

        // ℓ ∂Φ/∂ℓ: cos(u) → u sin(u), sin(u) → −u cos(u)
        let u = self.points.phases(theta.lengthscale(), &self.x);
        let dphi = DMatrix::from_fn(phi.nrows(), phi.ncols(), |i, c| {
            let v = u[(i, c / 2)];
            if c % 2 == 0 {
                v * v.sin()
            } else {
                -v * v.cos()
            }
        });
        let zinv = wb.chol.inverse();
        let cross = phi.tr_mul(&dphi);
        let trace_term = zinv.component_mul(&cross.transpose()).sum();
        let resid = (&self.y - &phi * &wb.alpha) / theta.noise;
        let quad_term = resid.dot(&(&dphi * &wb.alpha));
        let d_log_ell = trace_term - quad_term;

        Ok((wb.nlml, vec![d_log_mag, d_log_ell, dv * theta.noise]))
    }

    pub fn predict(&self, spec: &KernelSpec, theta: &Hyperparams, x_star: &DMatrix<f64>) -> Result<Prediction> {
        single_component(spec, theta)?;
        ssgp_predict_summary(&self.points, &self.summary(theta.lengthscale()), theta, x_star)
    }
}

/// Prediction from feature statistics computed at `theta`'s length-scale,
/// without the training data.
pub fn ssgp_predict_summary(
    points: &SpectralPoints,
    summary: &Summary,
    theta: &Hyperparams,
    x_star: &DMatrix<f64>,
) -> Result<Prediction> {
    if summary.gram.nrows() != 2 * points.len() {
        return Err(invalid("feature statistics do not match the spectral points"));
    }
    let s = vec![theta.magnitude() / points.len() as f64; 2 * points.len()];
    let wb = Woodbury::new(summary, &s, theta.noise, theta)?;
    let phi_star = points.features(theta.lengthscale(), x_star)?;
    let (mean, var) = wb.predict_features(&phi_star);
    Ok(Prediction::new(mean, var, theta.noise))
}

pub fn ssgp_predict(fit: &SsgpFit, spec: &KernelSpec, theta: &Hyperparams, x_star: &DMatrix<f64>) -> Result<Prediction> {
    fit.predict(spec, theta, x_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_nlml() {
        let x = DMatrix::from_element(1, 1, 0.3);
        let y = DVector::from_element(1, 0.8);
        let th = Hyperparams::new(1.3, 0.5, 0.2);
        let v = full_gp_nlml(&x, &y, &KernelSpec::SquaredExponential, &th).unwrap();
        let t: f64 = 1.3 + 0.2;
        assert_relative_eq!(v, 0.5 * t.ln() + 0.64 / (2.0 * t) + 0.5 * (2.0 * PI).ln(), max_relative = 1e-14);
    }

    #[test]
    fn two_point_closed_form() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_column_slice(&[1.0, 0.0]);
        let th = Hyperparams::new(1.0, 1.0, 0.01);
        let xs = DMatrix::from_column_slice(1, 1, &[0.5]);
        let p = full_gp_predict(&x, &y, &KernelSpec::SquaredExponential, &th, &xs).unwrap();
        // explicit 2×2 inverse
        let k01 = (-0.5f64).exp();
        let (a, b) = (1.01, k01);
        let det = a * a - b * b;
        let qinv = [[a / det, -b / det], [-b / det, a / det]];
        let ks = (-0.125f64).exp();
        let kv = [ks, ks];
        let w = [qinv[0][0] * 1.0 + qinv[0][1] * 0.0, qinv[1][0] * 1.0 + qinv[1][1] * 0.0];
        let mean = kv[0] * w[0] + kv[1] * w[1];
        let quad: f64 = (0..2).map(|i| (0..2).map(|j| kv[i] * qinv[i][j] * kv[j]).sum::<f64>()).sum();
        assert_relative_eq!(p.mean[0], mean, max_relative = 1e-12);
        assert_relative_eq!(p.var_latent[0], 1.0 - quad, max_relative = 1e-10);
        assert_relative_eq!(p.var_observation[0], 1.0 - quad + 0.01, max_relative = 1e-10);
    }

    #[test]
    fn interpolates_with_tiny_noise() {
        let x = DMatrix::from_column_slice(4, 1, &[-0.6, -0.1, 0.3, 0.9]);
        let y = DVector::from_column_slice(&[0.5, -1.0, 0.2, 1.4]);
        let th = Hyperparams::new(1.0, 0.3, 1e-12);
        let p = full_gp_predict(&x, &y, &KernelSpec::SquaredExponential, &th, &x).unwrap();
        assert!((p.mean - y).amax() < 1e-5);
    }

    #[test]
    fn kernel_matrix_is_symmetric() {
        let x = DMatrix::from_fn(30, 2, |i, k| ((i * 7 + k * 3) % 11) as f64 * 0.13);
        let th = Hyperparams::new(1.0, 0.4, 0.1);
        let k = kernel_matrix(&KernelSpec::matern(1.5).unwrap(), &th, &x, &x);
        let asym = (&k - k.transpose()).amax() / k.amax();
        assert!(asym < 1e-12);
    }

    #[test]
    fn ssgp_diagonal_is_magnitude() {
        let sp = SpectralPoints::sample(&KernelSpec::SquaredExponential, 50, 2, 3).unwrap();
        let th = Hyperparams::new(2.7, 0.3, 0.1);
        assert_eq!(ssgp_kernel_eval(&sp, &th, &[0.4, -1.1], &[0.4, -1.1]).unwrap(), 2.7);
    }

    #[test]
    fn zero_frequency_gives_constant_kernel() {
        let sp = SpectralPoints::from_frequencies(DMatrix::zeros(1, 1)).unwrap();
        let th = Hyperparams::new(1.7, 0.3, 0.1);
        for (a, b) in [(0.0, 3.0), (-2.0, 5.5)] {
            assert_eq!(ssgp_kernel_eval(&sp, &th, &[a], &[b]).unwrap(), 1.7);
        }
    }

    #[test]
    fn ssgp_rejects_sums() {
        let spec = KernelSpec::sum(vec![KernelSpec::SquaredExponential, KernelSpec::SquaredExponential]).unwrap();
        assert!(matches!(SpectralPoints::sample(&spec, 4, 1, 0), Err(GpError::UnsupportedKernel(_))));
    }
}
