//! Laplacian eigenbases on compact domains.
//!
//! On a hyperrectangle `Ω = Π [c_k - L_k, c_k + L_k]` with Dirichlet boundary
//! conditions the eigenpairs are products of sines,
//!
//! ```text
//! φ_j(x) = Π_k L_k^{-1/2} sin(π j_k (x_k - c_k + L_k) / (2 L_k)),
//! λ_j    = Σ_k (π j_k / (2 L_k))²,
//! ```
//!
//! and on the unit sphere they are the real spherical harmonics with
//! `λ = l (l + 1)`. A stationary kernel is approximated on either domain by
//! `k̃(x, x') = Σ_j S(√λ_j) φ_j(x) φ_j(x')`.

pub mod sphere;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GpError, Result};
use crate::kernels::{self, Hyperparams, KernelSpec};

/// Upper bound on the number of basis functions a lattice search may return.
const MAX_BASIS_SIZE: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Hyperrectangle {
        center: Vec<f64>,
        half_widths: Vec<f64>,
    },
    /// Unit sphere; inputs are `(latitude, longitude)` in radians.
    Sphere {
        /// Dimension plugged into the spectral density (2 = intrinsic).
        #[serde(default = "default_sphere_dim")]
        spectral_dim: usize,
    },
}

fn default_sphere_dim() -> usize {
    2
}

impl Domain {
    pub fn interval(center: f64, half_width: f64) -> Result<Self> {
        Domain::hyperrectangle(vec![center], vec![half_width])
    }

    pub fn hyperrectangle(center: Vec<f64>, half_widths: Vec<f64>) -> Result<Self> {
        if center.is_empty() || center.len() != half_widths.len() {
            return Err(invalid("center and half-widths must be non-empty and of equal length"));
        }
        if let Some(l) = half_widths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(invalid(format!("half-widths must be positive, got {l}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("center must be finite"));
        }
        Ok(Domain::Hyperrectangle { center, half_widths })
    }

    pub fn unit_sphere() -> Self {
        Domain::Sphere { spectral_dim: 2 }
    }

    /// Number of input coordinates.
    pub fn input_dim(&self) -> usize {
        match self {
            Domain::Hyperrectangle { center, .. } => center.len(),
            Domain::Sphere { .. } => 2,
        }
    }

    /// Dimension used when evaluating spectral densities.
    pub fn spectral_dim(&self) -> usize {
        match self {
            Domain::Hyperrectangle { center, .. } => center.len(),
            Domain::Sphere { spectral_dim } => *spectral_dim,
        }
    }

    /// Smallest half-width (infinite for the sphere).
    pub fn min_half_width(&self) -> f64 {
        match self {
            Domain::Hyperrectangle { half_widths, .. } => half_widths.iter().copied().fold(f64::INFINITY, f64::min),
            Domain::Sphere { .. } => f64::INFINITY,
        }
    }

    /// Rejects inputs outside the domain. Points on the boundary are accepted.
    pub fn check_point(&self, row: usize, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(invalid(format!(
                "row {row} has {} coordinates, domain expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        match self {
            Domain::Hyperrectangle { center, half_widths } => {
                for (dim, ((&v, &c), &l)) in x.iter().zip(center).zip(half_widths).enumerate() {
                    if !v.is_finite() || (v - c).abs() > l {
                        return Err(GpError::OutOfDomain {
                            row,
                            dim,
                            value: v,
                            half_width: l,
                        });
                    }
                }
            }
            Domain::Sphere { .. } => {
                let (lat, lon) = (x[0], x[1]);
                if !lat.is_finite() || lat.abs() > PI / 2.0 + 1e-12 {
                    return Err(GpError::OutOfDomain {
                        row,
                        dim: 0,
                        value: lat,
                        half_width: PI / 2.0,
                    });
                }
                if !lon.is_finite() {
                    return Err(GpError::OutOfDomain {
                        row,
                        dim: 1,
                        value: lon,
                        half_width: f64::INFINITY,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn check_inputs(&self, x: &DMatrix<f64>) -> Result<()> {
        let mut buf = vec![0.0; x.ncols()];
        for i in 0..x.nrows() {
            row_into(x, i, &mut buf);
            self.check_point(i, &buf)?;
        }
        Ok(())
    }
}

pub(crate) fn row_into(x: &DMatrix<f64>, i: usize, buf: &mut [f64]) {
    for (k, b) in buf.iter_mut().enumerate() {
        *b = x[(i, k)];
    }
}

/// Hyperrectangle covering the inputs, widened by `extension` on each side.
///
/// Each half-width is `(1 + extension) · range_k / 2`. Dimensions where every
/// input coincides get `extension · max(other ranges, 1)`.
pub fn domain_from_data(x: &DMatrix<f64>, extension: f64) -> Result<Domain> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(invalid("cannot build a domain from an empty input matrix"));
    }
    if !(extension.is_finite() && extension >= 0.0) {
        return Err(invalid(format!("extension must be >= 0, got {extension}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("inputs must be finite"));
    }
    let d = x.ncols();
    let (mut lo, mut hi) = (vec![f64::INFINITY; d], vec![f64::NEG_INFINITY; d]);
    for k in 0..d {
        for v in x.column(k).iter() {
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    let ranges: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut half = Vec::with_capacity(d);
    for k in 0..d {
        if ranges[k] > 0.0 {
            half.push((1.0 + extension) * ranges[k] / 2.0);
        } else {
            let other = ranges
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, r)| *r)
                .fold(1.0f64, f64::max);
            half.push(extension * other);
        }
    }
    if extension == 0.0 {
        log::warn!("domain extension is zero: the boundary coincides with the outermost inputs");
    }
    if half.iter().any(|l| *l <= 0.0) {
        return Err(invalid("a constant input dimension needs a positive extension"));
    }
    Domain::hyperrectangle(center, half)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EigenIndex {
    Cartesian(Vec<u32>),
    Spherical { l: u32, m: i32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisMode {
    /// The `m` smallest eigenvalues of the full lattice.
    Sorted,
    /// All indices `1..=m̂` in every dimension (`m = m̂^d`).
    Grid(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    pub domain: Domain,
    pub indices: Vec<EigenIndex>,
    pub eigenvalues: Vec<f64>,
}

fn cartesian_eigenvalue(j: &[u32], half_widths: &[f64]) -> f64 {
    j.iter()
        .zip(half_widths)
        .map(|(&jk, &l)| (PI * jk as f64 / (2.0 * l)).powi(2))
        .sum()
}

#[derive(PartialEq)]
struct Candidate {
    lambda: f64,
    index: Vec<u32>,
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.lambda.total_cmp(&other.lambda).then_with(|| self.index.cmp(&other.index))
    }
}

/// Selects `m` Laplacian eigenpairs of `domain`.
pub fn build_basis(domain: Domain, m: usize, mode: BasisMode) -> Result<Basis> {
    if m == 0 {
        return Err(invalid("basis size must be >= 1"));
    }
    if m > MAX_BASIS_SIZE {
        return Err(GpError::Resource(format!("basis size {m} exceeds the limit {MAX_BASIS_SIZE}")));
    }
    match &domain {
        Domain::Sphere { .. } => {
            let root = (m as f64).sqrt().round() as usize;
            if root * root != m {
                return Err(invalid(format!(
                    "spherical basis size must be (l_max + 1)^2, got {m}"
                )));
            }
            let l_max = root as u32 - 1;
            if l_max > sphere::MAX_DEGREE {
                return Err(invalid(format!(
                    "spherical degree {l_max} exceeds the maximum {}",
                    sphere::MAX_DEGREE
                )));
            }
            let mut indices = Vec::with_capacity(m);
            let mut eigenvalues = Vec::with_capacity(m);
            for l in 0..=l_max {
                for mo in -(l as i32)..=(l as i32) {
                    indices.push(EigenIndex::Spherical { l, m: mo });
                    eigenvalues.push((l * (l + 1)) as f64);
                }
            }
            Ok(Basis { domain, indices, eigenvalues })
        }
        Domain::Hyperrectangle { half_widths, .. } => {
            let d = half_widths.len();
            let mut cands: Vec<Candidate> = match mode {
                BasisMode::Grid(m_hat) => {
                    let expected = (m_hat as usize).checked_pow(d as u32);
                    if m_hat == 0 || expected != Some(m) {
                        return Err(invalid(format!(
                            "grid mode needs m = m̂^d, got m = {m}, m̂ = {m_hat}, d = {d}"
                        )));
                    }
                    (0..m)
                        .map(|t| {
                            // digits of t in base m̂, most significant first
                            let mut j = vec![1u32; d];
                            let mut rest = t;
                            for k in (0..d).rev() {
                                j[k] = (rest % m_hat as usize) as u32 + 1;
                                rest /= m_hat as usize;
                            }
                            Candidate {
                                lambda: cartesian_eigenvalue(&j, half_widths),
                                index: j,
                            }
                        })
                        .collect()
                }
                BasisMode::Sorted => sorted_lattice(half_widths, m)?,
            };
            cands.sort();
            let (indices, eigenvalues) = cands
                .into_iter()
                .map(|c| (EigenIndex::Cartesian(c.index), c.lambda))
                .unzip();
            Ok(Basis { domain, indices, eigenvalues })
        }
    }
}

/// The `m` lattice points with the smallest eigenvalues, found by expanding
/// a frontier from `(1, …, 1)`.
fn sorted_lattice(half_widths: &[f64], m: usize) -> Result<Vec<Candidate>> {
    let d = half_widths.len();
    let limit = m.saturating_mul(d).saturating_mul(2).saturating_add(16);
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let start = vec![1u32; d];
    seen.insert(start.clone());
    heap.push(Reverse(Candidate {
        lambda: cartesian_eigenvalue(&start, half_widths),
        index: start,
    }));
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let Reverse(c) = heap.pop().expect("lattice frontier is never empty");
        for k in 0..d {
            let mut next = c.index.clone();
            next[k] = next[k]
                .checked_add(1)
                .ok_or_else(|| GpError::Resource("eigen-index overflow".into()))?;
            if seen.insert(next.clone()) {
                heap.push(Reverse(Candidate {
                    lambda: cartesian_eigenvalue(&next, half_widths),
                    index: next,
                }));
            }
        }
        if heap.len() > limit {
            return Err(GpError::Resource(format!("lattice frontier exceeded {limit} candidates")));
        }
        out.push(c);
    }
    Ok(out)
}

impl Basis {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Rebuilds a basis from stored indices, recomputing the eigenvalues.
    pub fn from_indices(domain: Domain, indices: Vec<EigenIndex>) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("basis needs at least one index"));
        }
        let mut eigenvalues = Vec::with_capacity(indices.len());
        for idx in &indices {
            let lam = match (&domain, idx) {
                (Domain::Hyperrectangle { half_widths, .. }, EigenIndex::Cartesian(j)) => {
                    if j.len() != half_widths.len() || j.iter().any(|v| *v == 0) {
                        return Err(invalid(format!("invalid Cartesian index {j:?}")));
                    }
                    cartesian_eigenvalue(j, half_widths)
                }
                (Domain::Sphere { .. }, EigenIndex::Spherical { l, m }) => {
                    if m.unsigned_abs() > *l || *l > sphere::MAX_DEGREE {
                        return Err(invalid(format!("invalid spherical index ({l}, {m})")));
                    }
                    (l * (l + 1)) as f64
                }
                _ => return Err(invalid("index kind does not match the domain")),
            };
            eigenvalues.push(lam);
        }
        Ok(Basis { domain, indices, eigenvalues })
    }

    /// `S(√λ_j)` for every basis function.
    pub fn spectrum(&self, spec: &KernelSpec, theta: &Hyperparams) -> Vec<f64> {
        kernels::spectrum(spec, theta, self.domain.spectral_dim(), &self.eigenvalues)
    }

    /// Evaluates all basis functions at one point. The point must already be
    /// known to lie in the domain.
    pub fn eval_point(&self, x: &[f64], out: &mut [f64]) {
        match &self.domain {
            Domain::Hyperrectangle { center, half_widths } => {
                let d = center.len();
                let norm: f64 = half_widths.iter().map(|l| l.sqrt().recip()).product();
                // Scaled phase per dimension; sines are looked up per (dimension, j).
                let max_j: Vec<u32> = (0..d)
                    .map(|k| {
                        self.indices
                            .iter()
                            .map(|i| match i {
                                EigenIndex::Cartesian(j) => j[k],
                                _ => 0,
                            })
                            .max()
                            .unwrap_or(0)
                    })
                    .collect();
                let sines: Vec<Vec<f64>> = (0..d)
                    .map(|k| {
                        let phase = PI * (x[k] - center[k] + half_widths[k]) / (2.0 * half_widths[k]);
                        (0..=max_j[k]).map(|j| (j as f64 * phase).sin()).collect()
                    })
                    .collect();
                for (o, idx) in out.iter_mut().zip(&self.indices) {
                    if let EigenIndex::Cartesian(j) = idx {
                        *o = norm * j.iter().enumerate().map(|(k, &jk)| sines[k][jk as usize]).product::<f64>();
                    }
                }
            }
            Domain::Sphere { .. } => {
                let (lat, lon) = (x[0], x[1]);
                let l_max = self
                    .indices
                    .iter()
                    .map(|i| match i {
                        EigenIndex::Spherical { l, .. } => *l,
                        _ => 0,
                    })
                    .max()
                    .unwrap_or(0);
                // colatitude θ = π/2 - lat
                let p = sphere::normalized_legendre(l_max, lat.sin(), lat.cos());
                for (o, idx) in out.iter_mut().zip(&self.indices) {
                    if let EigenIndex::Spherical { l, m } = idx {
                        *o = sphere::real_harmonic(&p, *l, *m, lon);
                    }
                }
            }
        }
    }

    /// Φ with `Φ[i][j] = φ_j(x_i)`.
    pub fn eigenfunction_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.domain.check_inputs(x)?;
        Ok(self.eigenfunction_matrix_unchecked(x))
    }

    pub(crate) fn eigenfunction_matrix_unchecked(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, m) = (x.nrows(), self.len());
        let mut phi = DMatrix::zeros(n, m);
        let mut xb = vec![0.0; x.ncols()];
        let mut row = vec![0.0; m];
        for i in 0..n {
            row_into(x, i, &mut xb);
            self.eval_point(&xb, &mut row);
            for (j, v) in row.iter().enumerate() {
                phi[(i, j)] = *v;
            }
        }
        phi
    }

    /// `k̃(x, x') = Σ_j S(√λ_j) φ_j(x) φ_j(x')`. Sum kernels share the basis and
    /// add their spectra.
    pub fn approx_kernel_eval(&self, spec: &KernelSpec, theta: &Hyperparams, x: &[f64], xp: &[f64]) -> Result<f64> {
        theta.validate_relaxed(spec)?;
        self.domain.check_point(0, x)?;
        self.domain.check_point(1, xp)?;
        let s = self.spectrum(spec, theta);
        let (mut a, mut b) = (vec![0.0; self.len()], vec![0.0; self.len()]);
        self.eval_point(x, &mut a);
        self.eval_point(xp, &mut b);
        Ok(s.iter().zip(a.iter().zip(&b)).map(|(s, (a, b))| s * (a * b)).sum())
    }

    /// Karhunen–Loève prior draw `f = Φ (√S ∘ z)`, `z ~ N(0, I)`, seeded.
    pub fn sample_prior(&self, spec: &KernelSpec, theta: &Hyperparams, x: &DMatrix<f64>, seed: u64) -> Result<DVector<f64>> {
        theta.validate_relaxed(spec)?;
        let phi = self.eigenfunction_matrix(x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.spectrum(spec, theta);
        let coef = DVector::from_iterator(
            self.len(),
            s.iter().map(|s| {
                let z: f64 = StandardNormal.sample(&mut rng);
                s.sqrt() * z
            }),
        );
        Ok(phi * coef)
    }
}

pub fn eigenfunction_matrix(basis: &Basis, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    basis.eigenfunction_matrix(x)
}

pub fn approx_kernel_eval(basis: &Basis, spec: &KernelSpec, theta: &Hyperparams, x: &[f64], xp: &[f64]) -> Result<f64> {
    basis.approx_kernel_eval(spec, theta, x, xp)
}

pub fn sample_prior(basis: &Basis, spec: &KernelSpec, theta: &Hyperparams, x: &DMatrix<f64>, seed: u64) -> Result<DVector<f64>> {
    basis.sample_prior(spec, theta, x, seed)
}
