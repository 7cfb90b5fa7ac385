//! Predictive metrics, k-fold cross-validation and convergence diagnostics.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::basis::{build_basis, domain_from_data, Basis, BasisMode, Domain};
use crate::error::{invalid, GpError, Result};
use crate::kernels::{component_density, kernel_eval, Hyperparams, KernelSpec};
use crate::model::{precompute, FitState, PosteriorState, Prediction};
use crate::quad::{integrate_to_infinity, QuadOptions};
use crate::reference::{full_gp_predict, SpectralPoints, SsgpFit};
use crate::train::{
    default_theta0, finish, minimize_with_restarts, FullGpObjective, Method, OptimizationTrace, OptimizerOptions,
    ReducedRankObjective, SsgpObjective,
};

/// Standardized mean squared error `Σ(y*ᵢ − μ*ᵢ)² / (n* · Var[y])`.
///
/// Predicting the training mean scores about 1.
pub fn smse(y_star: &DVector<f64>, mu: &DVector<f64>, var_y_train: f64) -> Result<f64> {
    Ok(smse_unnormalized(y_star, mu, var_y_train)? / y_star.len() as f64)
}

/// The sum `Σ(y*ᵢ − μ*ᵢ)² / Var[y]` without the `1/n*` factor.
pub fn smse_unnormalized(y_star: &DVector<f64>, mu: &DVector<f64>, var_y_train: f64) -> Result<f64> {
    if y_star.is_empty() || y_star.len() != mu.len() {
        return Err(invalid("smse needs equally long, non-empty target and prediction vectors"));
    }
    if !(var_y_train > 0.0 && var_y_train.is_finite()) {
        return Err(invalid("smse needs a positive training variance"));
    }
    Ok((y_star - mu).norm_squared() / var_y_train)
}

/// Mean standardized log loss `(1/2n*) Σ[(y* − μ*)²/σ*² + log 2πσ*²]`, with
/// `σ*²` the observation variance. No baseline model is subtracted.
pub fn msll(y_star: &DVector<f64>, mu: &DVector<f64>, var: &DVector<f64>) -> Result<f64> {
    if y_star.is_empty() || y_star.len() != mu.len() || y_star.len() != var.len() {
        return Err(invalid("msll needs equally long, non-empty vectors"));
    }
    if let Some(i) = var.iter().position(|v| !(*v > 0.0)) {
        return Err(invalid(format!("predictive variance at index {i} is not positive")));
    }
    let total: f64 = y_star
        .iter()
        .zip(mu.iter())
        .zip(var.iter())
        .map(|((y, m), v)| (y - m).powi(2) / v + (2.0 * PI * v).ln())
        .sum();
    Ok(total / (2.0 * y_star.len() as f64))
}

/// Population variance.
pub fn variance(y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let mean = y.sum() / n;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodConfig {
    ReducedRank {
        m: usize,
        #[serde(default = "default_mode")]
        mode: BasisMode,
        #[serde(default = "default_extension")]
        extension: f64,
    },
    Full,
    /// Sparse-spectrum GP with `h` frequency pairs (rank `2h`).
    Ssgp { h: usize },
}

fn default_mode() -> BasisMode {
    BasisMode::Sorted
}

fn default_extension() -> f64 {
    0.1
}

impl MethodConfig {
    pub fn tag(&self) -> &'static str {
        match self {
            MethodConfig::ReducedRank { .. } => "reduced-rank",
            MethodConfig::Full => "full",
            MethodConfig::Ssgp { .. } => "ssgp",
        }
    }

    /// Number of basis functions or features, if the method has one.
    pub fn rank(&self) -> Option<usize> {
        match self {
            MethodConfig::ReducedRank { m, .. } => Some(*m),
            MethodConfig::Full => None,
            MethodConfig::Ssgp { h } => Some(2 * h),
        }
    }
}

/// Everything needed to fit one model to one training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: MethodConfig,
    pub kernel: KernelSpec,
    /// Starting point; the data-driven default is used when absent.
    #[serde(default)]
    pub theta0: Option<Hyperparams>,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    /// Subtract the training mean from `y` before fitting.
    #[serde(default)]
    pub center_y: bool,
    /// Seed for the SSGP frequencies.
    #[serde(default)]
    pub seed: u64,
}

impl FitConfig {
    pub fn new(method: MethodConfig, kernel: KernelSpec) -> Self {
        FitConfig {
            method,
            kernel,
            theta0: None,
            optimizer: OptimizerOptions::default(),
            center_y: false,
            seed: 0,
        }
    }
}

/// A model fitted by [`fit_method`], able to predict at new inputs.
#[derive(Clone, Debug)]
pub enum FittedModel {
    ReducedRank { fit: FitState, posterior: PosteriorState },
    Full { x: DMatrix<f64>, y: DVector<f64>, theta: Hyperparams },
    Ssgp { fit: SsgpFit, theta: Hyperparams },
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: FittedModel,
    pub kernel: KernelSpec,
    pub theta: Hyperparams,
    pub trace: OptimizationTrace,
    pub y_offset: f64,
    pub seconds_precompute: f64,
    pub seconds_train: f64,
}

impl FitOutcome {
    pub fn predict(&self, x_star: &DMatrix<f64>) -> Result<Prediction> {
        let mut p = match &self.model {
            FittedModel::ReducedRank { fit, posterior } => posterior.predict(&fit.basis, x_star)?,
            FittedModel::Full { x, y, theta } => full_gp_predict(x, y, &self.kernel, theta, x_star)?,
            FittedModel::Ssgp { fit, theta } => fit.predict(&self.kernel, theta, x_star)?,
        };
        p.mean.add_scalar_mut(self.y_offset);
        Ok(p)
    }
}

/// Builds the basis (if any), optimizes the hyperparameters and returns a
/// predictive model.
pub fn fit_method(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &FitConfig) -> Result<FitOutcome> {
    if x.nrows() != y.len() || x.nrows() == 0 {
        return Err(invalid("training inputs and targets must be non-empty and of equal length"));
    }
    let y_offset = if cfg.center_y { y.mean() } else { 0.0 };
    let yc = y.add_scalar(-y_offset);
    let theta0 = match &cfg.theta0 {
        Some(t) => t.clone(),
        None => default_theta0(&cfg.kernel, x, &yc),
    };
    theta0.validate(&cfg.kernel)?;
    let x0 = theta0.to_log_vec();
    let spec = &cfg.kernel;

    let t0 = Instant::now();
    let (model, theta, trace, seconds_precompute, seconds_train) = match &cfg.method {
        MethodConfig::ReducedRank { m, mode, extension } => {
            let domain = domain_from_data(x, *extension)?;
            let basis = build_basis(domain, *m, *mode)?;
            let fit = precompute(x, &yc, &basis)?;
            let tp = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let obj = ReducedRankObjective { fit: &fit, spec };
            let (theta, trace) = finish(minimize_with_restarts(&obj, &x0, &cfg.optimizer, Method::QuasiNewton)?)?;
            let posterior = PosteriorState::new(&fit, spec, &theta)?;
            let tt = t1.elapsed().as_secs_f64();
            (FittedModel::ReducedRank { fit, posterior }, theta, trace, tp, tt)
        }
        MethodConfig::Full => {
            let obj = FullGpObjective { x, y: &yc, spec };
            let (theta, trace) = finish(minimize_with_restarts(&obj, &x0, &cfg.optimizer, Method::QuasiNewton)?)?;
            let tt = t0.elapsed().as_secs_f64();
            (
                FittedModel::Full {
                    x: x.clone(),
                    y: yc.clone(),
                    theta: theta.clone(),
                },
                theta,
                trace,
                0.0,
                tt,
            )
        }
        MethodConfig::Ssgp { h } => {
            let points = SpectralPoints::sample(spec, *h, x.ncols(), cfg.seed)?;
            let fit = SsgpFit::new(points, x.clone(), yc.clone())?;
            let tp = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let obj = SsgpObjective { fit: &fit, spec };
            let (theta, trace) = finish(minimize_with_restarts(&obj, &x0, &cfg.optimizer, Method::QuasiNewton)?)?;
            let tt = t1.elapsed().as_secs_f64();
            (FittedModel::Ssgp { fit, theta: theta.clone() }, theta, trace, tp, tt)
        }
    };
    Ok(FitOutcome {
        model,
        kernel: spec.clone(),
        theta,
        trace,
        y_offset,
        seconds_precompute,
        seconds_train,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub smse: f64,
    pub msll: f64,
    pub nlml: f64,
    pub theta: Hyperparams,
    pub iterations: usize,
    pub seconds_precompute: f64,
    pub seconds_train: f64,
    pub seconds_predict: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub precompute: f64,
    pub train: f64,
    pub predict: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub m: Option<usize>,
    pub seed: u64,
    pub k: usize,
    pub smse: f64,
    pub smse_std: f64,
    pub msll: f64,
    pub msll_std: f64,
    /// `"mean"` for `Σ/(n*·Var)`, `"sum"` for the unnormalized sum.
    pub smse_normalization: String,
    pub folds: Vec<FoldMetrics>,
    /// Totals over folds.
    pub wall_clock_seconds: Timings,
}

/// Seeded assignment of `n` points to `k` folds of near-equal size.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

fn select_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// k-fold cross-validation. Each fold rebuilds the domain from its training
/// inputs, optimizes the hyperparameters and scores the held-out points.
/// Folds run in parallel; the report does not depend on the thread count.
pub fn kfold_cv(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &FitConfig, k: usize, seed: u64) -> Result<MetricsReport> {
    kfold_cv_with(x, y, cfg, k, seed, false)
}

/// As [`kfold_cv`]; `unnormalized_smse` reports the SMSE sum without the
/// `1/n*` factor.
pub fn kfold_cv_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &FitConfig,
    k: usize,
    seed: u64,
    unnormalized_smse: bool,
) -> Result<MetricsReport> {
    let n = x.nrows();
    if y.len() != n {
        return Err(invalid(format!("{n} input rows but {} targets", y.len())));
    }
    if k < 2 || n < k {
        return Err(invalid(format!("k-fold CV needs 2 <= k <= n (k = {k}, n = {n})")));
    }
    let assign = fold_assignment(n, k, seed);
    let folds: Vec<Result<FoldMetrics>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let test: Vec<usize> = (0..n).filter(|&i| assign[i] == fold).collect();
            let train: Vec<usize> = (0..n).filter(|&i| assign[i] != fold).collect();
            if train.len() < 2 {
                return Err(invalid(format!("fold {fold} leaves fewer than 2 training points")));
            }
            let xtr = select_rows(x, &train);
            let ytr = DVector::from_fn(train.len(), |i, _| y[train[i]]);
            let xte = select_rows(x, &test);
            let yte = DVector::from_fn(test.len(), |i, _| y[test[i]]);
            let mut fold_cfg = cfg.clone();
            fold_cfg.seed = cfg.seed.wrapping_add(fold as u64);
            let out = fit_method(&xtr, &ytr, &fold_cfg)?;
            let t = Instant::now();
            let pred = out.predict(&xte).map_err(|e| match e {
                GpError::OutOfDomain { row, dim, value, half_width } => GpError::OutOfDomain {
                    row: test[row],
                    dim,
                    value,
                    half_width,
                },
                e => e,
            })?;
            let seconds_predict = t.elapsed().as_secs_f64();
            let var_train = variance(&ytr);
            let s = if unnormalized_smse {
                smse_unnormalized(&yte, &pred.mean, var_train)?
            } else {
                smse(&yte, &pred.mean, var_train)?
            };
            Ok(FoldMetrics {
                fold,
                n_train: train.len(),
                n_test: test.len(),
                smse: s,
                msll: msll(&yte, &pred.mean, &pred.var_observation)?,
                nlml: out.trace.final_nlml(),
                theta: out.theta,
                iterations: out.trace.iterations(),
                seconds_precompute: out.seconds_precompute,
                seconds_train: out.seconds_train,
                seconds_predict,
            })
        })
        .collect();
    let folds = folds.into_iter().collect::<Result<Vec<_>>>()?;
    let (smse_mean, smse_std) = mean_std(&folds.iter().map(|f| f.smse).collect::<Vec<_>>());
    let (msll_mean, msll_std) = mean_std(&folds.iter().map(|f| f.msll).collect::<Vec<_>>());
    let wall = folds.iter().fold(Timings::default(), |t, f| Timings {
        precompute: t.precompute + f.seconds_precompute,
        train: t.train + f.seconds_train,
        predict: t.predict + f.seconds_predict,
    });
    Ok(MetricsReport {
        method: cfg.method.tag().to_string(),
        m: cfg.method.rank(),
        seed,
        k,
        smse: smse_mean,
        smse_std,
        msll: msll_mean,
        msll_std,
        smse_normalization: if unnormalized_smse { "sum" } else { "mean" }.to_string(),
        folds,
        wall_clock_seconds: wall,
    })
}

/// Writes one CSV row per fold of every report.
pub fn write_sweep_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "m",
        "seed",
        "fold",
        "smse",
        "msll",
        "seconds_precompute",
        "seconds_train",
        "seconds_predict",
    ])
    .map_err(csv_err)?;
    for r in reports {
        for f in &r.folds {
            w.write_record([
                r.method.clone(),
                r.m.map(|m| m.to_string()).unwrap_or_default(),
                r.seed.to_string(),
                f.fold.to_string(),
                format!("{:e}", f.smse),
                format!("{:e}", f.msll),
                format!("{:e}", f.seconds_precompute),
                format!("{:e}", f.seconds_train),
                format!("{:e}", f.seconds_predict),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> GpError {
    GpError::Io(std::io::Error::other(e.to_string()))
}

/// Truncation tail of the spectral density,
/// `(1/π^d) ∫_{‖ω‖ ≥ πm/2L} S(ω) dω`, with `m` the number of basis functions
/// per dimension and `L` the smallest half-width. For `d = 1` this is
/// `(2/π) ∫_{πm/2L}^∞ S(ω) dω`. The squared-exponential case in one dimension
/// uses the closed form `2σ² erfc(πmℓ / (2√2 L))`.
pub fn theorem1_tail(spec: &KernelSpec, theta: &Hyperparams, d: usize, m: usize, half_width: f64) -> Result<f64> {
    tail_impl(spec, theta, d, m, half_width, true)
}

/// [`theorem1_tail`] evaluated by quadrature only.
pub fn theorem1_tail_quadrature(spec: &KernelSpec, theta: &Hyperparams, d: usize, m: usize, half_width: f64) -> Result<f64> {
    tail_impl(spec, theta, d, m, half_width, false)
}

fn tail_impl(spec: &KernelSpec, theta: &Hyperparams, d: usize, m: usize, half_width: f64, closed_form: bool) -> Result<f64> {
    theta.validate(spec)?;
    if m == 0 || d == 0 {
        return Err(invalid("tail needs m >= 1 and d >= 1"));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(invalid("tail needs a positive half-width"));
    }
    let a = PI * m as f64 / (2.0 * half_width);
    let df = d as f64;
    // surface area of the unit sphere in R^d, over π^d
    let shell = (2.0 * (0.5 * df * PI.ln()).exp() / ln_gamma(0.5 * df).exp()) / PI.powi(d as i32);
    let opts = QuadOptions::default();
    let mut total = 0.0;
    for (kind, c) in spec.components().iter().zip(&theta.components) {
        let (s2, ell) = (c.magnitude, c.lengthscale);
        total += match kind {
            KernelSpec::SquaredExponential if closed_form && d == 1 => 2.0 * s2 * erfc(a * ell / 2f64.sqrt()),
            _ => {
                // integrate in the dimensionless radius u = ωℓ
                let f = |u: f64| {
                    let w = a + u / ell;
                    w.powi(d as i32 - 1) * component_density(kind, s2, ell, d, w) / ell
                };
                shell * integrate_to_infinity(f, 0.0, opts)?
            }
        };
    }
    Ok(total.max(0.0))
}

/// Evaluation grid for [`kernel_sup_error`]: `points` per dimension spread
/// evenly over `[c − L̃, c + L̃]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupErrorGrid {
    pub half_extent: Vec<f64>,
    pub points: usize,
}

impl SupErrorGrid {
    /// Grid covering `fraction` of every half-width of the domain.
    pub fn fraction_of(domain: &Domain, fraction: f64, points: usize) -> Result<Self> {
        match domain {
            Domain::Hyperrectangle { half_widths, .. } => Ok(SupErrorGrid {
                half_extent: half_widths.iter().map(|l| l * fraction).collect(),
                points,
            }),
            Domain::Sphere { .. } => Err(invalid("sup-error grids need a hyperrectangle domain")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupError {
    pub error: f64,
    pub x: Vec<f64>,
    pub xp: Vec<f64>,
}

/// Largest `|k(‖x − x'‖) − k̃(x, x')|` over all pairs of grid points.
pub fn kernel_sup_error(basis: &Basis, spec: &KernelSpec, theta: &Hyperparams, grid: &SupErrorGrid) -> Result<SupError> {
    theta.validate(spec)?;
    let Domain::Hyperrectangle { center, .. } = &basis.domain else {
        return Err(invalid("sup-error grids need a hyperrectangle domain"));
    };
    let d = center.len();
    if grid.half_extent.len() != d || grid.points < 2 {
        return Err(invalid("grid must match the domain dimension and have >= 2 points per axis"));
    }
    let total = grid
        .points
        .checked_pow(d as u32)
        .filter(|t| *t <= 20_000)
        .ok_or_else(|| GpError::Resource("sup-error grid larger than 20000 points".into()))?;
    let g = DMatrix::from_fn(total, d, |i, k| {
        let digit = (i / grid.points.pow(k as u32)) % grid.points;
        let t = -1.0 + 2.0 * digit as f64 / (grid.points - 1) as f64;
        center[k] + t * grid.half_extent[k]
    });
    let phi = basis.eigenfunction_matrix(&g)?;
    let s = basis.spectrum(spec, theta);
    let mut phis = phi.clone();
    for (j, sj) in s.iter().enumerate() {
        phis.column_mut(j).scale_mut(*sj);
    }
    let approx = phis * phi.transpose();
    let best = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0, i, i);
            for j in i..total {
                let r = (0..d).map(|k| (g[(i, k)] - g[(j, k)]).powi(2)).sum::<f64>().sqrt();
                let exact = kernel_eval(spec, theta, r).unwrap_or(f64::NAN);
                let e = (exact - approx[(i, j)]).abs();
                if e > best.0 || e.is_nan() {
                    best = (e, i, j);
                }
            }
            best
        })
        .reduce(|| (0.0, 0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a });
    let row = |i: usize| (0..d).map(|k| g[(i, k)]).collect::<Vec<_>>();
    Ok(SupError {
        error: best.0,
        x: row(best.1),
        xp: row(best.2),
    })
}

/// Opper–Vivarelli learning-curve approximation
/// `ε(n) = σ_n² Σ_j S_j / (σ_n² + n S_j)` for a hypothetical sample size `n`.
pub fn learning_curve_ov(basis: &Basis, spec: &KernelSpec, theta: &Hyperparams, n: f64) -> Result<f64> {
    theta.validate(spec)?;
    if !(n >= 0.0 && n.is_finite()) {
        return Err(invalid("sample count must be finite and >= 0"));
    }
    let s = basis.spectrum(spec, theta);
    if n == 0.0 {
        return Ok(s.iter().sum());
    }
    let v = theta.noise;
    // v s / (v + n s) written so that every term is <= v / n in floating point
    Ok(s.iter().map(|&sj| if sj > 0.0 { v / (n + v / sj) } else { 0.0 }).sum())
}
