//! Reduced-rank GP regression.
//!
//! With `Q̃ = Φ Λ Φᵀ + σ_n² I` and `Z = σ_n² Λ⁻¹ + ΦᵀΦ`, every quantity needed
//! for the marginal likelihood, its gradient and the posterior is expressed
//! through the `m × m` matrix `Z`:
//!
//! ```text
//! log|Q̃|    = (n - m) log σ_n² + log|Z| + Σ_j log S(√λ_j)
//! yᵀQ̃⁻¹y    = (yᵀy - yᵀΦ Z⁻¹ Φᵀy) / σ_n²
//! E[f*]     = φ*ᵀ Z⁻¹ Φᵀy
//! V[f*]     = σ_n² φ*ᵀ Z⁻¹ φ*
//! ```
//!
//! `ΦᵀΦ`, `Φᵀy` and `yᵀy` do not depend on the hyperparameters, so they are
//! computed once in [`precompute`] and each likelihood step costs `O(m³)`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::basis::Basis;
use crate::error::{invalid, GpError, Result};
use crate::kernels::{self, Hyperparams, KernelSpec};
use crate::linalg::{cholesky_jittered, log_det};

/// Spectral values below this are clamped before entering `Λ⁻¹`.
pub const SPECTRUM_FLOOR: f64 = 1e-300;

/// Sufficient statistics of the training data in a fixed feature basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    /// ΦᵀΦ
    pub gram: DMatrix<f64>,
    /// Φᵀy
    pub proj: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

impl Summary {
    /// Accumulates the statistics from a dense feature matrix.
    pub fn from_features(phi: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        Summary {
            gram: phi.tr_mul(phi),
            proj: phi.tr_mul(y),
            yty: y.dot(y),
            n: y.len(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PrecomputeOptions {
    /// Rows of Φ materialized at once.
    pub block_size: usize,
    /// Keep `X` and `y` in the fit state.
    pub retain_data: bool,
}

impl Default for PrecomputeOptions {
    fn default() -> Self {
        PrecomputeOptions {
            block_size: 4096,
            retain_data: false,
        }
    }
}

/// Hyperparameter-independent precomputation for one dataset and basis.
#[derive(Clone, Debug)]
pub struct FitState {
    pub basis: Basis,
    pub summary: Summary,
    pub data: Option<(DMatrix<f64>, DVector<f64>)>,
}

pub fn precompute(x: &DMatrix<f64>, y: &DVector<f64>, basis: &Basis) -> Result<FitState> {
    precompute_with(x, y, basis, PrecomputeOptions::default())
}

/// Streams Φ over row blocks. Blocks may be evaluated in parallel; their
/// contributions are summed in block order so the result does not depend on
/// the thread count.
pub fn precompute_with(x: &DMatrix<f64>, y: &DVector<f64>, basis: &Basis, opts: PrecomputeOptions) -> Result<FitState> {
    let n = x.nrows();
    if n == 0 {
        return Err(invalid("training set is empty"));
    }
    if y.len() != n {
        return Err(invalid(format!("{n} input rows but {} targets", y.len())));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("target in row {i} is not finite")));
    }
    if opts.block_size == 0 {
        return Err(invalid("block size must be >= 1"));
    }
    basis.domain.check_inputs(x)?;
    let m = basis.len();
    let starts: Vec<usize> = (0..n).step_by(opts.block_size).collect();
    let partials: Vec<(DMatrix<f64>, DVector<f64>)> = starts
        .par_iter()
        .map(|&start| {
            let rows = opts.block_size.min(n - start);
            let xb = x.rows(start, rows).into_owned();
            let phi = basis.eigenfunction_matrix_unchecked(&xb);
            let yb = y.rows(start, rows);
            (phi.tr_mul(&phi), phi.tr_mul(&yb))
        })
        .collect();
    let mut gram = DMatrix::zeros(m, m);
    let mut proj = DVector::zeros(m);
    for (g, p) in partials {
        gram += g;
        proj += p;
    }
    // Exact symmetry regardless of summation order inside the GEMM.
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (gram[(i, j)] + gram[(j, i)]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    Ok(FitState {
        basis: basis.clone(),
        summary: Summary {
            gram,
            proj,
            yty: y.dot(y),
            n,
        },
        data: opts.retain_data.then(|| (x.clone(), y.clone())),
    })
}

/// Factorization of `Z` for one set of spectral weights and noise variance.
#[derive(Clone, Debug)]
pub struct Woodbury {
    pub spectrum: Vec<f64>,
    pub noise: f64,
    pub chol: Cholesky<f64, Dyn>,
    /// Z⁻¹Φᵀy
    pub alpha: DVector<f64>,
    pub nlml: f64,
}

impl Woodbury {
    /// Factorizes `Z = σ_n² Λ⁻¹ + ΦᵀΦ` and evaluates the NLML.
    pub fn new(summary: &Summary, spectrum: &[f64], noise: f64, theta: &dyn std::fmt::Display) -> Result<Self> {
        let m = spectrum.len();
        if summary.gram.nrows() != m {
            return Err(invalid(format!("spectrum has {m} entries, gram is {}", summary.gram.nrows())));
        }
        let s: Vec<f64> = spectrum.iter().map(|v| v.max(SPECTRUM_FLOOR)).collect();
        let mut z = summary.gram.clone();
        for j in 0..m {
            z[(j, j)] += noise / s[j];
        }
        let (chol, _) = cholesky_jittered(&z).ok_or_else(|| GpError::Conditioning { theta: theta.to_string() })?;
        let alpha = chol.solve(&summary.proj);
        let n = summary.n as f64;
        let log_det_q = (n - m as f64) * noise.ln() + log_det(&chol) + s.iter().map(|v| v.ln()).sum::<f64>();
        let quad = (summary.yty - summary.proj.dot(&alpha)) / noise;
        let nlml = 0.5 * log_det_q + 0.5 * quad + 0.5 * n * (2.0 * PI).ln();
        if !nlml.is_finite() {
            return Err(GpError::Conditioning { theta: theta.to_string() });
        }
        Ok(Woodbury {
            spectrum: s,
            noise,
            chol,
            alpha,
            nlml,
        })
    }

    /// Sensitivities of the NLML to each log spectral weight `log S(√λ_j)`
    /// and to the noise variance:
    ///
    /// ```text
    /// ∂L/∂log s_j = ½ [1 − σ_n² (Z⁻¹)_jj / s_j − α_j² / s_j]
    /// ∂L/∂σ_n²    = ½ [(n − m)/σ_n² + Σ_j (Z⁻¹)_jj / s_j] + ½ [αᵀΛ⁻¹α − yᵀQ̃⁻¹y] / σ_n²
    /// ```
    pub fn gradient_parts(&self, summary: &Summary) -> (Vec<f64>, f64) {
        let m = self.spectrum.len();
        let zinv = self.chol.inverse();
        let v = self.noise;
        let mut dlogs = Vec::with_capacity(m);
        let (mut tr, mut a_l_a) = (0.0, 0.0);
        for j in 0..m {
            let s = self.spectrum[j];
            let zjj = zinv[(j, j)];
            let a2s = self.alpha[j] * self.alpha[j] / s;
            dlogs.push(0.5 * (1.0 - v * zjj / s - a2s));
            tr += zjj / s;
            a_l_a += a2s;
        }
        let quad = (summary.yty - summary.proj.dot(&self.alpha)) / v;
        let n = summary.n as f64;
        let dv = 0.5 * ((n - m as f64) / v + tr) + 0.5 * (a_l_a - quad) / v;
        (dlogs, dv)
    }

    /// Mean and latent variance for feature rows `phi_star`.
    pub fn predict_features(&self, phi_star: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
        let mean = phi_star * &self.alpha;
        // rows of L⁻¹ φ*
        let w = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&phi_star.transpose())
            .expect("Cholesky factor has a positive diagonal");
        let var = DVector::from_iterator(
            phi_star.nrows(),
            w.column_iter().map(|c| (self.noise * c.norm_squared()).max(0.0)),
        );
        (mean, var)
    }
}

/// Predictive moments at a set of test inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    /// V[f*]
    pub var_latent: DVector<f64>,
    /// V[f*] + σ_n²
    pub var_observation: DVector<f64>,
}

impl Prediction {
    pub(crate) fn new(mean: DVector<f64>, var_latent: DVector<f64>, noise: f64) -> Self {
        let var_observation = var_latent.map(|v| v + noise);
        Prediction {
            mean,
            var_latent,
            var_observation,
        }
    }
}

/// Per-hyperparameter posterior over the reduced-rank model.
#[derive(Clone, Debug)]
pub struct PosteriorState {
    pub theta: Hyperparams,
    pub factor: Woodbury,
}

impl PosteriorState {
    pub fn new(fit: &FitState, spec: &KernelSpec, theta: &Hyperparams) -> Result<Self> {
        theta.validate(spec)?;
        let s = fit.basis.spectrum(spec, theta);
        let factor = Woodbury::new(&fit.summary, &s, theta.noise, theta)?;
        Ok(PosteriorState {
            theta: theta.clone(),
            factor,
        })
    }

    /// Diagonal of Λ (clamped spectral weights).
    pub fn lambda(&self) -> &[f64] {
        &self.factor.spectrum
    }

    pub fn predict(&self, basis: &Basis, x_star: &DMatrix<f64>) -> Result<Prediction> {
        let phi = basis.eigenfunction_matrix(x_star)?;
        let (mean, var) = self.factor.predict_features(&phi);
        Ok(Prediction::new(mean, var, self.theta.noise))
    }
}

/// Negative log marginal likelihood of the reduced-rank model.
pub fn nlml(fit: &FitState, spec: &KernelSpec, theta: &Hyperparams) -> Result<f64> {
    Ok(PosteriorState::new(fit, spec, theta)?.factor.nlml)
}

/// NLML and its gradient with respect to
/// `[log σ²₁, log ℓ₁, …, log σ_n²]`.
pub fn nlml_with_grad(fit: &FitState, spec: &KernelSpec, theta: &Hyperparams) -> Result<(f64, Vec<f64>)> {
    theta.validate(spec)?;
    let d = fit.basis.domain.spectral_dim();
    let (s, dlogs_dtheta) = kernels::spectrum_with_log_grad(spec, theta, d, &fit.basis.eigenvalues);
    let wb = Woodbury::new(&fit.summary, &s, theta.noise, theta)?;
    let (dl_dlogs, dl_dv) = wb.gradient_parts(&fit.summary);
    let np = 2 * spec.num_components();
    let mut grad = vec![0.0; np + 1];
    for (j, row) in dlogs_dtheta.iter().enumerate() {
        // clamped weights are constant in θ
        if s[j] < SPECTRUM_FLOOR {
            continue;
        }
        for p in 0..np {
            grad[p] += dl_dlogs[j] * row[p];
        }
    }
    grad[np] = dl_dv * theta.noise;
    Ok((wb.nlml, grad))
}

pub fn nlml_grad(fit: &FitState, spec: &KernelSpec, theta: &Hyperparams) -> Result<Vec<f64>> {
    Ok(nlml_with_grad(fit, spec, theta)?.1)
}

/// `∂L/∂log S(√λ_j)` for each basis function.
pub fn log_spectrum_sensitivity(fit: &FitState, spec: &KernelSpec, theta: &Hyperparams) -> Result<Vec<f64>> {
    let post = PosteriorState::new(fit, spec, theta)?;
    Ok(post.factor.gradient_parts(&fit.summary).0)
}

pub fn predict(fit: &FitState, spec: &KernelSpec, theta: &Hyperparams, x_star: &DMatrix<f64>) -> Result<Prediction> {
    PosteriorState::new(fit, spec, theta)?.predict(&fit.basis, x_star)
}
