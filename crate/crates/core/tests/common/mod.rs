#![allow(dead_code)]

pub mod mp;

use std::f64::consts::PI;

use hilbert_gp::basis::Basis;
use hilbert_gp::{Hyperparams, KernelSpec};
use nalgebra::{DMatrix, DVector};

/// Dense evaluation of the reduced-rank model with `K̃ = ΦΛΦᵀ + σ_n² I`.
pub struct DenseOracle {
    pub k: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub lambda: Vec<f64>,
    pub noise: f64,
    pub y: DVector<f64>,
}

impl DenseOracle {
    pub fn new(basis: &Basis, spec: &KernelSpec, theta: &Hyperparams, x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let phi = basis.eigenfunction_matrix(x).unwrap();
        let lambda = basis.spectrum(spec, theta);
        let n = x.nrows();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for (c, l) in lambda.iter().enumerate() {
                    v += phi[(i, c)] * l * phi[(j, c)];
                }
                k[(i, j)] = v;
            }
            k[(i, i)] += theta.noise;
        }
        DenseOracle {
            k,
            phi,
            lambda,
            noise: theta.noise,
            y: y.clone(),
        }
    }

    pub fn nlml(&self) -> f64 {
        let n = self.y.len() as f64;
        let chol = self.k.clone().cholesky().expect("oracle matrix is positive definite");
        let alpha = chol.solve(&self.y);
        let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        0.5 * self.y.dot(&alpha) + 0.5 * logdet + 0.5 * n * (2.0 * PI).ln()
    }

    /// Latent mean and variance at test features `phi_star` (rows).
    pub fn predict(&self, phi_star: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
        let chol = self.k.clone().cholesky().unwrap();
        let lam = DMatrix::from_diagonal(&DVector::from_vec(self.lambda.clone()));
        // cross covariance n × n*
        let kx = &self.phi * &lam * phi_star.transpose();
        let mean = kx.tr_mul(&chol.solve(&self.y));
        let v = chol.solve(&kx);
        let var = DVector::from_fn(phi_star.nrows(), |i, _| {
            let prior: f64 = (0..self.lambda.len()).map(|c| phi_star[(i, c)].powi(2) * self.lambda[c]).sum();
            prior - kx.column(i).dot(&v.column(i))
        });
        (mean, var)
    }
}

fn legendre_pair(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Gauss–Legendre rule on `[-1, 1]`, `n >= 2`, by Newton iteration.
pub fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, q) = legendre_pair(n, z);
            let dz = p / (n as f64 * (z * p - q) / (z * z - 1.0));
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (p, q) = legendre_pair(n, z);
        let dp = n as f64 * (z * p - q) / (z * z - 1.0);
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Composite Gauss–Legendre over `[a, b]` with `panels` equal panels.
pub fn composite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            total += 0.5 * h * w * f(mid + 0.5 * h * x);
        }
    }
    total
}

/// Wynn's epsilon algorithm on a sequence of partial sums; returns the
/// deepest finite even-column estimate.
pub fn wynn_epsilon(s: &[f64]) -> f64 {
    let mut prev = vec![0.0; s.len() + 1];
    let mut cur: Vec<f64> = s.to_vec();
    let mut best = *s.last().unwrap();
    let mut col = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let diff = cur[i + 1] - cur[i];
            if diff == 0.0 {
                return best;
            }
            next.push(prev[i + 1] + 1.0 / diff);
        }
        col += 1;
        prev = cur;
        cur = next;
        if col % 2 == 0 {
            match cur.last() {
                Some(v) if v.is_finite() => best = *v,
                _ => return best,
            }
        }
    }
    best
}

/// `∫_0^∞ g(ω) dω` for smooth, decaying `g`, by panels on `ω = t/(1-t)`.
pub fn semi_infinite<F: Fn(f64) -> f64>(g: &F) -> f64 {
    let rule = legendre_rule(40);
    let h = |t: f64| {
        let s = 1.0 - t;
        g(t / s) / (s * s)
    };
    composite(&h, 0.0, 1.0, 400, &rule)
}

/// `∫_0^∞ g(ω) w(ωr) dω` for oscillatory `w` of period `2π/r`: sum over half
/// periods, then extrapolate the partial sums.
pub fn oscillatory<F: Fn(f64) -> f64>(g: &F, r: f64, head_periods: usize, terms: usize) -> f64 {
    let rule = legendre_rule(30);
    let half = PI / r;
    let head = composite(g, 0.0, head_periods as f64 * half, 16 * head_periods, &rule);
    let mut partial = Vec::with_capacity(terms);
    let mut acc = head;
    for k in 0..terms {
        let a = (head_periods + k) as f64 * half;
        acc += composite(g, a, a + half, 2, &rule);
        partial.push(acc);
    }
    wynn_epsilon(&partial)
}

/// `(1/π) ∫_0^∞ S(ω) cos(ωr) dω`, the one-dimensional inverse transform.
pub fn cosine_transform<F: Fn(f64) -> f64>(s: &F, r: f64) -> f64 {
    if r == 0.0 {
        return semi_infinite(s) / PI;
    }
    oscillatory(&|w: f64| s(w) * (w * r).cos(), r, 200, 20) / PI
}

/// Radial inverse transform in three dimensions,
/// `k(r) = (1/(2π² r)) ∫_0^∞ S(ω) ω sin(ωr) dω`.
pub fn radial_transform_3d<F: Fn(f64) -> f64>(s: &F, r: f64) -> f64 {
    if r == 0.0 {
        return semi_infinite(&|w: f64| s(w) * w * w) / (2.0 * PI * PI);
    }
    oscillatory(&|w: f64| s(w) * w * (w * r).sin(), r, 200, 20) / (2.0 * PI * PI * r)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn vec_rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn kernels() -> Vec<KernelSpec> {
    vec![
        KernelSpec::SquaredExponential,
        KernelSpec::matern(0.5).unwrap(),
        KernelSpec::matern(1.5).unwrap(),
        KernelSpec::matern(2.5).unwrap(),
    ]
}
