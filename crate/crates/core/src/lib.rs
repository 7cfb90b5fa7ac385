//! Reduced-rank Gaussian process regression on Laplacian eigenbases.
//!
//! A stationary covariance function is approximated on a compact domain by
//! `k̃(x, x') = Σ_j S(√λ_j) φ_j(x) φ_j(x')`, where `(λ_j, φ_j)` are Dirichlet
//! eigenpairs of the Laplacian and `S` is the kernel's spectral density. The
//! basis does not depend on the hyperparameters, so after an `O(n m²)`
//! precomputation the marginal likelihood and its gradient cost `O(m³)`.
//!
//! Modules:
//! * [`kernels`]: covariance functions, spectral densities and gradients
//! * [`basis`]: domains, eigenpairs, the approximate kernel, prior draws
//! * [`model`]: precomputation, marginal likelihood, prediction
//! * [`reference`]: exact dense GP and sparse-spectrum baselines
//! * [`train`]: quasi-Newton hyperparameter optimization, gradient checks
//! * [`eval`]: metrics, cross-validation, convergence diagnostics
//! * [`cli`]: data ingestion, configuration and the command workflows

pub mod basis;
pub mod cli;
pub mod error;
pub mod eval;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod reference;
pub mod toy;
pub mod train;

pub use basis::{build_basis, domain_from_data, Basis, BasisMode, Domain, EigenIndex};
pub use error::{GpError, Result};
pub use kernels::{kernel_eval, spectral_density, spectral_density_grad, ComponentParams, Hyperparams, KernelSpec, Smoothness};
pub use model::{nlml, nlml_grad, precompute, predict, FitState, PosteriorState, Prediction};
