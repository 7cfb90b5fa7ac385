//! Hyperparameter optimization in log-parameter space.
//!
//! The default optimizer is BFGS with a dense inverse-Hessian approximation
//! and a backtracking line search enforcing the Armijo condition. The number
//! of hyperparameters is small (two per kernel component plus the noise), so
//! the dense update costs nothing next to one likelihood evaluation.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GpError, Result};
use crate::kernels::{Hyperparams, KernelSpec};
use crate::model::{nlml_with_grad, FitState};
use crate::reference::{full_gp_nlml_with_grad, SsgpFit};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    /// Relative tolerance on the change of the objective.
    pub tol_f: f64,
    /// Tolerance on the step in log-parameters.
    pub tol_x: f64,
    /// Total number of runs; runs after the first start from a jittered θ0.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iters: 200,
            tol_f: 1e-5,
            tol_x: 1e-5,
            restarts: 1,
            seed: 0,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be >= 1"));
        }
        if !(self.tol_f > 0.0 && self.tol_x > 0.0) {
            return Err(invalid("optimizer tolerances must be positive"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    ConvergedF,
    ConvergedX,
    MaxIters,
    LineSearchFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub log_theta: Vec<f64>,
    pub nlml: f64,
    pub grad_norm: f64,
    /// Line-search step length (0 for the starting point).
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    /// Starting point followed by every accepted step.
    pub entries: Vec<TraceEntry>,
    pub status: TerminalStatus,
    /// Which restart produced this trace.
    pub restart: usize,
    pub evaluations: usize,
}

impl OptimizationTrace {
    pub fn iterations(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn final_nlml(&self) -> f64 {
        self.entries.last().map_or(f64::NAN, |e| e.nlml)
    }
}

/// A differentiable objective over log-parameters.
pub trait Objective: Sync {
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Sync,
{
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(x)
    }
}

/// Reduced-rank NLML over `[log σ²₁, log ℓ₁, …, log σ_n²]`.
pub struct ReducedRankObjective<'a> {
    pub fit: &'a FitState,
    pub spec: &'a KernelSpec,
}

impl Objective for ReducedRankObjective<'_> {
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        nlml_with_grad(self.fit, self.spec, &Hyperparams::from_log_vec(x)?)
    }
}

/// Exact dense-GP NLML.
pub struct FullGpObjective<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a DVector<f64>,
    pub spec: &'a KernelSpec,
}

impl Objective for FullGpObjective<'_> {
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        full_gp_nlml_with_grad(self.x, self.y, self.spec, &Hyperparams::from_log_vec(x)?)
    }
}

/// SSGP NLML with fixed spectral points.
pub struct SsgpObjective<'a> {
    pub fit: &'a SsgpFit,
    pub spec: &'a KernelSpec,
}

impl Objective for SsgpObjective<'_> {
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.fit.nlml_with_grad(self.spec, &Hyperparams::from_log_vec(x)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    QuasiNewton,
    /// Steepest descent with the same line search.
    GradientDescent,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 50;
/// Largest allowed change of any log-parameter in one step.
const MAX_LOG_STEP: f64 = 3.0;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn eval_finite(obj: &dyn Objective, x: &[f64]) -> Option<(f64, Vec<f64>)> {
    match obj.eval(x) {
        Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Some((f, g)),
        _ => None,
    }
}

/// One optimization run from `x0`.
pub fn minimize(obj: &dyn Objective, x0: &[f64], opts: &OptimizerOptions, method: Method) -> Result<OptimizationTrace> {
    opts.validate()?;
    let n = x0.len();
    let (mut f, g) = obj.eval(x0)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(invalid("objective is not finite at the starting point"));
    }
    let mut evaluations = 1;
    let mut x = DVector::from_column_slice(x0);
    let mut grad = DVector::from_vec(g);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut fresh_hessian = true;
    let mut entries = vec![TraceEntry {
        log_theta: x0.to_vec(),
        nlml: f,
        grad_norm: grad.norm(),
        step: 0.0,
    }];
    let mut status = TerminalStatus::MaxIters;

    for _ in 0..opts.max_iters {
        let mut dir = match method {
            Method::QuasiNewton => -(&h_inv * &grad),
            Method::GradientDescent => -grad.clone(),
        };
        let mut slope = grad.dot(&dir);
        if !(slope < 0.0) {
            h_inv = DMatrix::identity(n, n);
            fresh_hessian = true;
            dir = -grad.clone();
            slope = grad.dot(&dir);
        }
        let f_scale = 1.0 + f.abs();
        let mut t = (MAX_LOG_STEP / inf_norm(dir.as_slice()).max(1e-300)).min(1.0);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &dir * t;
            evaluations += 1;
            if let Some((ft, gt)) = eval_finite(obj, trial.as_slice()) {
                if ft <= f + ARMIJO_C1 * t * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // The achievable decrease is below the objective tolerance.
            if -slope < opts.tol_f * f_scale {
                status = TerminalStatus::ConvergedF;
                break;
            }
            if !fresh_hessian && method == Method::QuasiNewton {
                h_inv = DMatrix::identity(n, n);
                fresh_hessian = true;
                continue;
            }
            status = TerminalStatus::LineSearchFailure;
            break;
        };
        let s = &x_new - &x;
        let g_new = DVector::from_vec(g_new);
        let yv = &g_new - &grad;
        let df = f - f_new;
        let step_norm = inf_norm(s.as_slice());
        x = x_new;
        f = f_new;
        grad = g_new;
        entries.push(TraceEntry {
            log_theta: x.as_slice().to_vec(),
            nlml: f,
            grad_norm: grad.norm(),
            step: t,
        });

        if df <= opts.tol_f * f_scale {
            status = TerminalStatus::ConvergedF;
            break;
        }
        if step_norm <= opts.tol_x * (1.0 + inf_norm(x.as_slice())) {
            status = TerminalStatus::ConvergedX;
            break;
        }

        if method == Method::QuasiNewton {
            let sy = s.dot(&yv);
            if sy > 1e-12 * s.norm() * yv.norm() {
                if fresh_hessian {
                    h_inv *= sy / yv.dot(&yv);
                    fresh_hessian = false;
                }
                let rho = 1.0 / sy;
                let hy = &h_inv * &yv;
                let yhy = yv.dot(&hy);
                // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
                h_inv -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
                h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
            }
        }
    }
    Ok(OptimizationTrace {
        entries,
        status,
        restart: 0,
        evaluations,
    })
}

/// Runs `opts.restarts` optimizations (the first from `x0`, the rest from
/// `x0` jittered by N(0, 0.5²) per coordinate) and keeps the run with the
/// lowest terminal objective.
pub fn minimize_with_restarts(obj: &dyn Objective, x0: &[f64], opts: &OptimizerOptions, method: Method) -> Result<OptimizationTrace> {
    opts.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let jitter = Normal::new(0.0, 0.5).expect("valid normal");
    let starts: Vec<Vec<f64>> = (0..opts.restarts)
        .map(|r| {
            if r == 0 {
                x0.to_vec()
            } else {
                x0.iter().map(|v| v + jitter.sample(&mut rng)).collect()
            }
        })
        .collect();
    let runs: Vec<Result<OptimizationTrace>> = starts
        .par_iter()
        .enumerate()
        .map(|(r, start)| {
            minimize(obj, start, opts, method).map(|mut t| {
                t.restart = r;
                t
            })
        })
        .collect();

    let mut best: Option<OptimizationTrace> = None;
    let mut failed_trace = None;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(t) if t.status == TerminalStatus::LineSearchFailure && t.iterations() == 0 => failed_trace = Some(t),
            Ok(t) => {
                if best.as_ref().is_none_or(|b| t.final_nlml() < b.final_nlml()) {
                    best = Some(t);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, failed_trace, last_err) {
        (Some(t), _, _) => Ok(t),
        (None, Some(t), _) => Err(GpError::Optimization {
            reason: "line search failed at the first iteration of every restart".into(),
            trace: Box::new(t),
        }),
        (None, None, Some(e)) => Err(e),
        (None, None, None) => unreachable!("at least one restart runs"),
    }
}

/// Fits the reduced-rank model's hyperparameters.
pub fn optimize(fit: &FitState, spec: &KernelSpec, theta0: &Hyperparams, opts: &OptimizerOptions) -> Result<(Hyperparams, OptimizationTrace)> {
    theta0.validate(spec)?;
    let obj = ReducedRankObjective { fit, spec };
    finish(minimize_with_restarts(&obj, &theta0.to_log_vec(), opts, Method::QuasiNewton)?)
}

pub(crate) fn finish(trace: OptimizationTrace) -> Result<(Hyperparams, OptimizationTrace)> {
    let last = trace.entries.last().expect("trace has a starting point");
    Ok((Hyperparams::from_log_vec(&last.log_theta)?, trace))
}

/// Default starting point: σ² = Var[y] (split evenly over components, with
/// length-scales spread by factors of 3 for sums), ℓ = 20% of the largest
/// input range, σ_n² = 10% of Var[y].
pub fn default_theta0(spec: &KernelSpec, x: &DMatrix<f64>, y: &DVector<f64>) -> Hyperparams {
    let n = y.len().max(1) as f64;
    let mean = y.sum() / n;
    let var = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).max(1e-12);
    let range = (0..x.ncols())
        .map(|k| {
            let c = x.column(k);
            c.max() - c.min()
        })
        .fold(0.0f64, f64::max);
    let ell = if range > 0.0 { 0.2 * range } else { 1.0 };
    let nc = spec.num_components();
    Hyperparams {
        components: (0..nc)
            .map(|c| crate::kernels::ComponentParams {
                magnitude: var / nc as f64,
                lengthscale: ell * 3f64.powi(c as i32),
            })
            .collect(),
        noise: 0.1 * var,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub rel_err: Vec<f64>,
    pub max_rel_err: f64,
}

/// Compares an objective's gradient with central differences of step `step`
/// in log-parameter space. Relative errors use
/// `max(|analytic|, |numeric|, 1e-8 · max(1, |f|))` as denominator.
pub fn grad_check_objective(obj: &dyn Objective, x: &[f64], step: f64) -> Result<GradCheck> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let (f, analytic) = obj.eval(x)?;
    let mut numeric = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let mut vals = [0.0; 2];
        for (slot, sign) in [(0, 1.0), (1, -1.0)] {
            let mut xp = x.to_vec();
            xp[k] += sign * step;
            let v = obj.eval(&xp).map(|r| r.0).unwrap_or(f64::NAN);
            if !v.is_finite() {
                return Err(GpError::InvalidArgument(format!(
                    "objective not finite at the {} perturbation of parameter {k}",
                    if sign > 0.0 { "positive" } else { "negative" }
                )));
            }
            vals[slot] = v;
        }
        numeric.push((vals[0] - vals[1]) / (2.0 * step));
    }
    let floor = 1e-8 * f.abs().max(1.0);
    let rel_err: Vec<f64> = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .collect();
    let max_rel_err = rel_err.iter().copied().fold(0.0, f64::max);
    Ok(GradCheck {
        analytic,
        numeric,
        rel_err,
        max_rel_err,
    })
}

/// Gradient check of the reduced-rank NLML at `theta`.
pub fn grad_check(fit: &FitState, spec: &KernelSpec, theta: &Hyperparams, step: f64) -> Result<GradCheck> {
    theta.validate(spec)?;
    grad_check_objective(&ReducedRankObjective { fit, spec }, &theta.to_log_vec(), step)
}
