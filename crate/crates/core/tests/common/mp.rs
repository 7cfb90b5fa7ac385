//! Reduced-rank NLML in 256-bit floating point, as a finite-difference oracle
//! free of double-precision roundoff. One-dimensional spectral densities only.

use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, Consts, RoundingMode};
use hilbert_gp::model::Summary;
use hilbert_gp::KernelSpec;

const P: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

#[derive(Clone, Debug)]
pub struct Mp(BigFloat);

impl Mp {
    pub fn of(v: f64) -> Self {
        Mp(BigFloat::from_f64(v, P))
    }

    pub fn exp(&self, cc: &mut Consts) -> Self {
        Mp(self.0.exp(P, RM, cc))
    }

    pub fn ln(&self, cc: &mut Consts) -> Self {
        Mp(self.0.ln(P, RM, cc))
    }

    pub fn sqrt(&self) -> Self {
        Mp(self.0.sqrt(P, RM))
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_string().parse().expect("decimal rendering parses as f64")
    }
}

macro_rules! binop {
    ($tr:ident, $f:ident) => {
        impl $tr<&Mp> for &Mp {
            type Output = Mp;
            fn $f(self, rhs: &Mp) -> Mp {
                Mp(self.0.$f(&rhs.0, P, RM))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Neg for Mp {
    type Output = Mp;
    fn neg(self) -> Mp {
        Mp(-self.0)
    }
}

/// One-dimensional spectral density of a single component.
fn density(kind: &KernelSpec, s2: &Mp, ell: &Mp, w: &Mp, cc: &mut Consts) -> Mp {
    match kind {
        KernelSpec::SquaredExponential => {
            // σ² √(2π) ℓ exp(−ω²ℓ²/2)
            let pi = Mp(cc.pi(P, RM));
            let root = (&Mp::of(2.0) * &pi).sqrt();
            let arg = -(&(&(w * w) * &(ell * ell)) / &Mp::of(2.0));
            &(&(s2 * &root) * ell) * &arg.exp(cc)
        }
        KernelSpec::Matern(s) => {
            let nu = s.nu();
            // σ² c_ν ℓ^{-2ν} (2ν/ℓ² + ω²)^{-(ν+1/2)} with the ν-specific constant
            let (c, k) = if nu == 0.5 {
                (Mp::of(2.0), 1)
            } else if nu == 1.5 {
                (&Mp::of(4.0) * &(&Mp::of(3.0) * &Mp::of(3.0).sqrt()), 2)
            } else {
                (&(&Mp::of(16.0) / &Mp::of(3.0)) * &(&Mp::of(25.0) * &Mp::of(5.0).sqrt()), 3)
            };
            let ell2 = ell * ell;
            let base = &(&Mp::of(2.0 * nu) / &ell2) + &(w * w);
            let mut denom = Mp::of(1.0);
            for _ in 0..k {
                denom = &denom * &base;
            }
            let mut lpow = ell.clone();
            for _ in 1..(2 * k - 1) {
                lpow = &lpow * ell;
            }
            &(s2 * &c) / &(&lpow * &denom)
        }
        KernelSpec::Sum(_) => unreachable!("sum kernels are expanded by the caller"),
    }
}

/// NLML at log-parameters `x` (the library's ordering) from a precomputed
/// summary, with the `k`-th log-parameter shifted by `shift`.
pub fn nlml(summary: &Summary, eigenvalues: &[f64], spec: &KernelSpec, x: &[f64], k: usize, shift: f64) -> Mp {
    let mut cc = Consts::new().expect("constants cache");
    let params: Vec<Mp> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut v = Mp::of(*v);
            if i == k {
                v = &v + &Mp::of(shift);
            }
            v.exp(&mut cc)
        })
        .collect();
    let log_noise = {
        let mut v = Mp::of(x[x.len() - 1]);
        if k == x.len() - 1 {
            v = &v + &Mp::of(shift);
        }
        v
    };
    let noise = &params[params.len() - 1];
    let m = eigenvalues.len();
    let n = summary.n;
    let s: Vec<Mp> = eigenvalues
        .iter()
        .map(|lam| {
            let w = Mp::of(*lam).sqrt();
            let mut total = Mp::of(0.0);
            for (c, kind) in spec.components().iter().enumerate() {
                total = &total + &density(kind, &params[2 * c], &params[2 * c + 1], &w, &mut cc);
            }
            total
        })
        .collect();

    // Z = σ_n² Λ⁻¹ + ΦᵀΦ and its Cholesky factor
    let mut z: Vec<Vec<Mp>> = (0..m)
        .map(|i| (0..m).map(|j| Mp::of(summary.gram[(i, j)])).collect())
        .collect();
    for i in 0..m {
        z[i][i] = &z[i][i] + &(noise / &s[i]);
    }
    let mut l: Vec<Vec<Mp>> = vec![vec![Mp::of(0.0); m]; m];
    for j in 0..m {
        let mut d = z[j][j].clone();
        for p in 0..j {
            d = &d - &(&l[j][p] * &l[j][p]);
        }
        let d = d.sqrt();
        for i in j + 1..m {
            let mut v = z[i][j].clone();
            for p in 0..j {
                v = &v - &(&l[i][p] * &l[j][p]);
            }
            l[i][j] = &v / &d;
        }
        l[j][j] = d;
    }
    // forward solve L u = Φᵀy, so bᵀZ⁻¹b = ‖u‖²
    let mut u: Vec<Mp> = Vec::with_capacity(m);
    for i in 0..m {
        let mut v = Mp::of(summary.proj[i]);
        for p in 0..i {
            v = &v - &(&l[i][p] * &u[p]);
        }
        u.push(&v / &l[i][i]);
    }
    let mut quad = Mp::of(summary.yty);
    for ui in &u {
        quad = &quad - &(ui * ui);
    }
    let mut logdet = Mp::of(0.0);
    for i in 0..m {
        logdet = &logdet + &(&Mp::of(2.0) * &l[i][i].ln(&mut cc));
        logdet = &logdet + &s[i].ln(&mut cc);
    }
    logdet = &logdet + &(&Mp::of((n - m) as f64) * &log_noise);
    let two_pi = &Mp::of(2.0) * &Mp(cc.pi(P, RM));
    let constant = &Mp::of(n as f64) * &two_pi.ln(&mut cc);
    &Mp::of(0.5) * &(&(&(&quad / noise) + &logdet) + &constant)
}

/// Central difference of [`nlml`] with step `h` in every log-parameter.
pub fn central_difference(summary: &Summary, eigenvalues: &[f64], spec: &KernelSpec, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let up = nlml(summary, eigenvalues, spec, x, k, h);
            let down = nlml(summary, eigenvalues, spec, x, k, -h);
            (&(&up - &down) / &Mp::of(2.0 * h)).to_f64()
        })
        .collect()
}
