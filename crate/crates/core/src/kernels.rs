//! Stationary isotropic covariance functions and their spectral densities.
//!
//! Every supported family is paired with its radial spectral density
//! `S(ω) = ∫ k(r) exp(-i ωᵀr) dr` in `d` input dimensions. Sums of kernels
//! carry one `(magnitude, lengthscale)` pair per summand and a single shared
//! noise variance.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, GpError, Result};

/// Half-integer Matérn smoothness with a closed-form covariance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Smoothness {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl Smoothness {
    pub fn from_nu(nu: f64) -> Result<Self> {
        if nu == 0.5 {
            Ok(Smoothness::Half)
        } else if nu == 1.5 {
            Ok(Smoothness::ThreeHalves)
        } else if nu == 2.5 {
            Ok(Smoothness::FiveHalves)
        } else {
            Err(GpError::UnsupportedKernel(format!(
                "Matérn smoothness nu = {nu} has no closed form; supported values are 0.5, 1.5 and 2.5"
            )))
        }
    }

    pub fn nu(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }
}

/// Covariance structure. Hyperparameters live separately in [`Hyperparams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelConfig", into = "KernelConfig")]
pub enum KernelSpec {
    SquaredExponential,
    Matern(Smoothness),
    /// Flat, non-empty list of non-sum terms.
    Sum(Vec<KernelSpec>),
}

/// Wire form of a kernel, e.g. `{"type": "matern", "nu": 1.5}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelConfig {
    #[serde(alias = "squared_exponential", alias = "rbf")]
    Se,
    Matern {
        nu: f64,
    },
    Sum {
        terms: Vec<KernelConfig>,
    },
}

impl TryFrom<KernelConfig> for KernelSpec {
    type Error = GpError;

    fn try_from(cfg: KernelConfig) -> Result<Self> {
        match cfg {
            KernelConfig::Se => Ok(KernelSpec::SquaredExponential),
            KernelConfig::Matern { nu } => Ok(KernelSpec::Matern(Smoothness::from_nu(nu)?)),
            KernelConfig::Sum { terms } => {
                let terms = terms
                    .into_iter()
                    .map(KernelSpec::try_from)
                    .collect::<Result<Vec<_>>>()?;
                KernelSpec::sum(terms)
            }
        }
    }
}

impl From<KernelSpec> for KernelConfig {
    fn from(spec: KernelSpec) -> Self {
        match spec {
            KernelSpec::SquaredExponential => KernelConfig::Se,
            KernelSpec::Matern(s) => KernelConfig::Matern { nu: s.nu() },
            KernelSpec::Sum(terms) => KernelConfig::Sum {
                terms: terms.into_iter().map(KernelConfig::from).collect(),
            },
        }
    }
}

impl KernelSpec {
    pub fn matern(nu: f64) -> Result<Self> {
        Ok(KernelSpec::Matern(Smoothness::from_nu(nu)?))
    }

    /// Builds a sum kernel, flattening nested sums.
    pub fn sum(terms: Vec<KernelSpec>) -> Result<Self> {
        let mut flat = Vec::with_capacity(terms.len());
        for t in terms {
            match t {
                KernelSpec::Sum(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.is_empty() {
            return Err(invalid("sum kernel needs at least one term"));
        }
        Ok(KernelSpec::Sum(flat))
    }

    /// The non-sum terms of this kernel, in order.
    pub fn components(&self) -> &[KernelSpec] {
        match self {
            KernelSpec::Sum(terms) => terms,
            other => std::slice::from_ref(other),
        }
    }

    pub fn num_components(&self) -> usize {
        self.components().len()
    }

    /// Number of log-space hyperparameters: two per component plus noise.
    pub fn num_params(&self) -> usize {
        2 * self.num_components() + 1
    }

    pub fn name(&self) -> String {
        match self {
            KernelSpec::SquaredExponential => "se".into(),
            KernelSpec::Matern(s) => format!("matern{}", s.nu()),
            KernelSpec::Sum(t) => t.iter().map(|k| k.name()).collect::<Vec<_>>().join("+"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentParams {
    /// Signal variance σ².
    pub magnitude: f64,
    /// Length-scale ℓ.
    pub lengthscale: f64,
}

/// Hyperparameters θ: one `(σ², ℓ)` pair per kernel component and a shared
/// noise variance σ_n².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub components: Vec<ComponentParams>,
    pub noise: f64,
}

impl Hyperparams {
    pub fn new(magnitude: f64, lengthscale: f64, noise: f64) -> Self {
        Hyperparams {
            components: vec![ComponentParams {
                magnitude,
                lengthscale,
            }],
            noise,
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.components[0].magnitude
    }

    pub fn lengthscale(&self) -> f64 {
        self.components[0].lengthscale
    }

    /// Total prior variance `k(0)`.
    pub fn total_magnitude(&self) -> f64 {
        self.components.iter().map(|c| c.magnitude).sum()
    }

    /// Strict validity: every parameter finite and positive.
    pub fn validate(&self, spec: &KernelSpec) -> Result<()> {
        self.validate_shape(spec)?;
        for (i, c) in self.components.iter().enumerate() {
            if !(c.magnitude.is_finite() && c.magnitude > 0.0) {
                return Err(invalid(format!("component {i}: magnitude must be > 0, got {}", c.magnitude)));
            }
        }
        Ok(())
    }

    /// Like [`Hyperparams::validate`] but admits zero magnitudes.
    pub(crate) fn validate_relaxed(&self, spec: &KernelSpec) -> Result<()> {
        self.validate_shape(spec)?;
        for (i, c) in self.components.iter().enumerate() {
            if !(c.magnitude.is_finite() && c.magnitude >= 0.0) {
                return Err(invalid(format!("component {i}: magnitude must be >= 0, got {}", c.magnitude)));
            }
        }
        Ok(())
    }

    fn validate_shape(&self, spec: &KernelSpec) -> Result<()> {
        if self.components.len() != spec.num_components() {
            return Err(invalid(format!(
                "kernel has {} components but {} hyperparameter sets were given",
                spec.num_components(),
                self.components.len()
            )));
        }
        for (i, c) in self.components.iter().enumerate() {
            if !(c.lengthscale.is_finite() && c.lengthscale > 0.0) {
                return Err(invalid(format!("component {i}: lengthscale must be > 0, got {}", c.lengthscale)));
            }
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return Err(invalid(format!("noise variance must be > 0, got {}", self.noise)));
        }
        Ok(())
    }

    /// `[log σ²₁, log ℓ₁, …, log σ²_c, log ℓ_c, log σ_n²]`.
    pub fn to_log_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.components.len() + 1);
        for c in &self.components {
            v.push(c.magnitude.ln());
            v.push(c.lengthscale.ln());
        }
        v.push(self.noise.ln());
        v
    }

    pub fn from_log_vec(log: &[f64]) -> Result<Self> {
        if log.len() < 3 || log.len() % 2 == 0 {
            return Err(invalid(format!("log-parameter vector has invalid length {}", log.len())));
        }
        let components = log[..log.len() - 1]
            .chunks_exact(2)
            .map(|p| ComponentParams {
                magnitude: p[0].exp(),
                lengthscale: p[1].exp(),
            })
            .collect();
        Ok(Hyperparams {
            components,
            noise: log[log.len() - 1].exp(),
        })
    }
}

impl std::fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for c in &self.components {
            write!(f, "σ²={:.6e}, ℓ={:.6e}; ", c.magnitude, c.lengthscale)?;
        }
        write!(f, "σ_n²={:.6e})", self.noise)
    }
}

// ---- single-component closed forms -------------------------------------------

pub(crate) fn component_kernel(kind: &KernelSpec, magnitude: f64, lengthscale: f64, r: f64) -> f64 {
    let u = r / lengthscale;
    match kind {
        KernelSpec::SquaredExponential => magnitude * (-0.5 * u * u).exp(),
        KernelSpec::Matern(Smoothness::Half) => magnitude * (-u).exp(),
        KernelSpec::Matern(Smoothness::ThreeHalves) => {
            let a = 3f64.sqrt() * u;
            magnitude * (1.0 + a) * (-a).exp()
        }
        KernelSpec::Matern(Smoothness::FiveHalves) => {
            let a = 5f64.sqrt() * u;
            magnitude * (1.0 + a + a * a / 3.0) * (-a).exp()
        }
        KernelSpec::Sum(_) => unreachable!("sum kernels are expanded by the caller"),
    }
}

/// `∂k/∂ℓ` for one component.
pub(crate) fn component_kernel_dlengthscale(kind: &KernelSpec, magnitude: f64, lengthscale: f64, r: f64) -> f64 {
    let u = r / lengthscale;
    match kind {
        KernelSpec::SquaredExponential => magnitude * (-0.5 * u * u).exp() * u * u / lengthscale,
        KernelSpec::Matern(Smoothness::Half) => magnitude * (-u).exp() * u / lengthscale,
        KernelSpec::Matern(Smoothness::ThreeHalves) => {
            let a = 3f64.sqrt() * u;
            magnitude * a * a * (-a).exp() / lengthscale
        }
        KernelSpec::Matern(Smoothness::FiveHalves) => {
            let a = 5f64.sqrt() * u;
            magnitude * a * a * (1.0 + a) * (-a).exp() / (3.0 * lengthscale)
        }
        KernelSpec::Sum(_) => unreachable!("sum kernels are expanded by the caller"),
    }
}

/// `log S(ω)` for one component with unit magnitude.
fn component_log_density_unit(kind: &KernelSpec, lengthscale: f64, d: usize, omega: f64) -> f64 {
    let df = d as f64;
    match kind {
        KernelSpec::SquaredExponential => {
            0.5 * df * (2.0 * PI).ln() + df * lengthscale.ln() - 0.5 * (omega * lengthscale).powi(2)
        }
        KernelSpec::Matern(s) => {
            let nu = s.nu();
            let ell2 = lengthscale * lengthscale;
            df * 2f64.ln() + 0.5 * df * PI.ln() + ln_gamma(nu + 0.5 * df) - ln_gamma(nu)
                + nu * (2.0 * nu).ln()
                - 2.0 * nu * lengthscale.ln()
                - (nu + 0.5 * df) * (2.0 * nu / ell2 + omega * omega).ln()
        }
        KernelSpec::Sum(_) => unreachable!("sum kernels are expanded by the caller"),
    }
}

pub(crate) fn component_density(kind: &KernelSpec, magnitude: f64, lengthscale: f64, d: usize, omega: f64) -> f64 {
    magnitude * component_log_density_unit(kind, lengthscale, d, omega).exp()
}

/// `∂ log S / ∂ℓ` for one component.
pub(crate) fn component_dlog_density_dlengthscale(kind: &KernelSpec, lengthscale: f64, d: usize, omega: f64) -> f64 {
    let df = d as f64;
    match kind {
        KernelSpec::SquaredExponential => df / lengthscale - omega * omega * lengthscale,
        KernelSpec::Matern(s) => {
            let nu = s.nu();
            let lw2 = (lengthscale * omega).powi(2);
            -2.0 * nu / lengthscale + (2.0 * nu + df) * 2.0 * nu / (lengthscale * (2.0 * nu + lw2))
        }
        KernelSpec::Sum(_) => unreachable!("sum kernels are expanded by the caller"),
    }
}

fn check_scalar(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(invalid(format!("{name} must be finite and non-negative, got {x}")));
    }
    Ok(())
}

/// Covariance `k(r)` at distance `r`.
pub fn kernel_eval(spec: &KernelSpec, theta: &Hyperparams, r: f64) -> Result<f64> {
    theta.validate_relaxed(spec)?;
    check_scalar("distance", r)?;
    Ok(spec
        .components()
        .iter()
        .zip(&theta.components)
        .map(|(k, p)| component_kernel(k, p.magnitude, p.lengthscale, r))
        .sum())
}

/// `[∂k/∂σ²₁, ∂k/∂ℓ₁, …]` at distance `r` (noise excluded).
pub fn kernel_grad(spec: &KernelSpec, theta: &Hyperparams, r: f64) -> Result<Vec<f64>> {
    theta.validate_relaxed(spec)?;
    check_scalar("distance", r)?;
    let mut g = Vec::with_capacity(2 * spec.num_components());
    for (k, p) in spec.components().iter().zip(&theta.components) {
        g.push(component_kernel(k, 1.0, p.lengthscale, r));
        g.push(component_kernel_dlengthscale(k, p.magnitude, p.lengthscale, r));
    }
    Ok(g)
}

/// Radial spectral density `S(ω)` in `d` dimensions. Densities of sum terms add.
pub fn spectral_density(spec: &KernelSpec, theta: &Hyperparams, d: usize, omega: f64) -> Result<f64> {
    theta.validate_relaxed(spec)?;
    check_scalar("frequency", omega)?;
    if d == 0 {
        return Err(invalid("input dimension must be >= 1"));
    }
    Ok(spec
        .components()
        .iter()
        .zip(&theta.components)
        .map(|(k, p)| component_density(k, p.magnitude, p.lengthscale, d, omega))
        .sum())
}

/// `[∂S/∂σ²₁, ∂S/∂ℓ₁, …]` in natural (not log) parameters.
pub fn spectral_density_grad(spec: &KernelSpec, theta: &Hyperparams, d: usize, omega: f64) -> Result<Vec<f64>> {
    theta.validate_relaxed(spec)?;
    check_scalar("frequency", omega)?;
    if d == 0 {
        return Err(invalid("input dimension must be >= 1"));
    }
    let mut g = Vec::with_capacity(2 * spec.num_components());
    for (k, p) in spec.components().iter().zip(&theta.components) {
        let unit = component_log_density_unit(k, p.lengthscale, d, omega).exp();
        g.push(unit);
        g.push(p.magnitude * unit * component_dlog_density_dlengthscale(k, p.lengthscale, d, omega));
    }
    Ok(g)
}

/// Spectral density at `√λ` for each eigenvalue together with the log-space
/// sensitivities `rows[j][p] = ∂ log S(√λ_j) / ∂ log θ_p` over the kernel
/// parameters `[σ²₁, ℓ₁, …]`.
pub(crate) fn spectrum_with_log_grad(
    spec: &KernelSpec,
    theta: &Hyperparams,
    d: usize,
    eigenvalues: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let nc = spec.num_components();
    let mut s = vec![0.0; eigenvalues.len()];
    let mut rows = vec![vec![0.0; 2 * nc]; eigenvalues.len()];
    let mut logs = vec![0.0; nc];
    for (j, &lam) in eigenvalues.iter().enumerate() {
        let omega = lam.max(0.0).sqrt();
        for (c, (k, p)) in spec.components().iter().zip(&theta.components).enumerate() {
            logs[c] = p.magnitude.ln() + component_log_density_unit(k, p.lengthscale, d, omega);
        }
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            continue;
        }
        let total: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        s[j] = top.exp() * total;
        for (c, (k, p)) in spec.components().iter().zip(&theta.components).enumerate() {
            let frac = (logs[c] - top).exp() / total;
            rows[j][2 * c] = frac;
            rows[j][2 * c + 1] = frac * p.lengthscale * component_dlog_density_dlengthscale(k, p.lengthscale, d, omega);
        }
    }
    (s, rows)
}

/// Spectral density at `√λ` for each eigenvalue; no validation.
pub(crate) fn spectrum(spec: &KernelSpec, theta: &Hyperparams, d: usize, eigenvalues: &[f64]) -> Vec<f64> {
    eigenvalues
        .iter()
        .map(|&lam| {
            let omega = lam.max(0.0).sqrt();
            spec.components()
                .iter()
                .zip(&theta.components)
                .map(|(k, p)| component_density(k, p.magnitude, p.lengthscale, d, omega))
                .sum()
        })
        .collect()
}
