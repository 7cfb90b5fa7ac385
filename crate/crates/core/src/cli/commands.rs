use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::artifact::ModelArtifact;
use super::config::{Config, MethodName, SmseNormalization};
use super::dataset::{write_csv, Dataset};
use crate::basis::{build_basis, domain_from_data, Domain};
use crate::error::{GpError, Result};
use crate::eval::{
    fit_method, kernel_sup_error, kfold_cv_with, learning_curve_ov, theorem1_tail, write_sweep_csv, MetricsReport,
    SupErrorGrid,
};
use crate::kernels::Hyperparams;
use crate::train::TerminalStatus;

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| GpError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| GpError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: MethodName,
    pub kernel: String,
    pub n: usize,
    pub m: Option<usize>,
    pub nlml: f64,
    pub theta: Hyperparams,
    pub log_theta: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: TerminalStatus,
    pub restart: usize,
    pub seconds_precompute: f64,
    pub seconds_train: f64,
}

/// Fits a model to `data` and writes the model file to `out`.
pub fn run_fit(cfg: &Config, data: &Path, out: &Path) -> Result<FitReport> {
    let ds = Dataset::read_path(data)?;
    let (names, x, y) = ds.split(cfg.data.inputs.as_deref(), &cfg.data.target)?;
    let fit_cfg = cfg.fit_config(cfg.method, x.ncols())?;
    let outcome = fit_method(&x, &y, &fit_cfg)?;
    let artifact = ModelArtifact::from_outcome(&outcome, names, cfg.data.target.clone(), cfg.seed);
    write_text(out, &artifact.to_json()?)?;
    let last = outcome.trace.entries.last().expect("trace has a starting point");
    Ok(FitReport {
        method: cfg.method,
        kernel: cfg.kernel.name(),
        n: y.len(),
        m: fit_cfg.method.rank(),
        nlml: last.nlml,
        theta: outcome.theta.clone(),
        log_theta: last.log_theta.clone(),
        iterations: outcome.trace.iterations(),
        evaluations: outcome.trace.evaluations,
        status: outcome.trace.status,
        restart: outcome.trace.restart,
        seconds_precompute: outcome.seconds_precompute,
        seconds_train: outcome.seconds_train,
    })
}

/// Predicts at the rows of `data` and writes
/// `inputs…, mean, var_latent, var_observation`.
pub fn run_predict(model: &Path, data: &Path, out: &Path) -> Result<usize> {
    let artifact = ModelArtifact::read_path(model)?;
    let ds = Dataset::read_path(data)?;
    let x = ds.select(&artifact.input_columns)?;
    let p = artifact.predict(&x)?;
    let mut header = artifact.input_columns.clone();
    header.extend(["mean", "var_latent", "var_observation"].map(String::from));
    let cols: Vec<Vec<f64>> = (0..x.ncols()).map(|j| x.column(j).iter().copied().collect()).collect();
    let mut refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    refs.extend([p.mean.as_slice(), p.var_latent.as_slice(), p.var_observation.as_slice()]);
    write_csv(create(out)?, &header, &refs)?;
    Ok(x.nrows())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub m: Option<usize>,
    pub smse: f64,
    pub smse_std: f64,
    pub msll: f64,
    pub msll_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvOutput {
    pub k: usize,
    pub seed: u64,
    pub smse_normalization: SmseNormalization,
    pub note: String,
    pub comparison: Vec<ComparisonRow>,
    pub reports: Vec<MetricsReport>,
}

impl CvOutput {
    pub fn table(&self) -> String {
        let mut s = format!("{:<14} {:>6} {:>22} {:>22}\n", "method", "m", "smse (± std)", "msll (± std)");
        for r in &self.comparison {
            s += &format!(
                "{:<14} {:>6} {:>12.5} ± {:<7.4} {:>12.5} ± {:<7.4}\n",
                r.method,
                r.m.map_or("-".into(), |m| m.to_string()),
                r.smse,
                r.smse_std,
                r.msll,
                r.msll_std
            );
        }
        s
    }
}

/// Cross-validates every configured method on the same folds. Writes the
/// JSON report to `out` and one CSV row per fold to `sweep`.
pub fn run_cv(cfg: &Config, data: &Path, out: &Path, sweep: &Path) -> Result<CvOutput> {
    let ds = Dataset::read_path(data)?;
    let (_, x, y) = ds.split(cfg.data.inputs.as_deref(), &cfg.data.target)?;
    let methods = if cfg.cv.methods.is_empty() {
        vec![cfg.method]
    } else {
        cfg.cv.methods.clone()
    };
    let unnormalized = cfg.cv.smse == SmseNormalization::Sum;
    let mut reports = Vec::new();
    for &method in &methods {
        let fit_cfg = cfg.fit_config(method, x.ncols())?;
        reports.push(kfold_cv_with(&x, &y, &fit_cfg, cfg.cv.k, cfg.cv.seed, unnormalized)?);
    }
    let output = CvOutput {
        k: cfg.cv.k,
        seed: cfg.cv.seed,
        smse_normalization: cfg.cv.smse,
        note: match cfg.cv.smse {
            SmseNormalization::Mean => "SMSE = sum((y - mu)^2) / (n_test * Var[y_train]); MSLL without baseline subtraction",
            SmseNormalization::Sum => "SMSE = sum((y - mu)^2) / Var[y_train], not divided by n_test; MSLL without baseline subtraction",
        }
        .into(),
        comparison: reports
            .iter()
            .map(|r| ComparisonRow {
                method: r.method.clone(),
                m: r.m,
                smse: r.smse,
                smse_std: r.smse_std,
                msll: r.msll,
                msll_std: r.msll_std,
            })
            .collect(),
        reports,
    };
    write_text(out, &cfg.to_json(&output)?)?;
    write_sweep_csv(&output.reports, create(sweep)?)?;
    Ok(output)
}

fn require_theta(cfg: &Config) -> Result<Hyperparams> {
    cfg.hyperparams
        .clone()
        .ok_or_else(|| GpError::Config("this command needs a 'hyperparams' section".into()))
}

/// Draws prior samples at the rows of `grid`; writes `inputs…, draw_1, …`.
pub fn run_sample(cfg: &Config, grid: &Path, seed: u64, out: &Path) -> Result<usize> {
    let theta = require_theta(cfg)?;
    let ds = Dataset::read_path(grid)?;
    let names = ds.input_names(cfg.data.inputs.as_deref(), None)?;
    let x = ds.select(&names)?;
    let domain = match &cfg.basis.domain {
        Some(d) => d.clone(),
        None => domain_from_data(&x, cfg.basis.extension)?,
    };
    let mode = cfg.basis.resolve_mode(domain.input_dim())?;
    let basis = build_basis(domain, cfg.basis.m, mode)?;
    let draws = (0..cfg.sample.draws.max(1))
        .map(|i| basis.sample_prior(&cfg.kernel, &theta, &x, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut header = names.clone();
    header.extend((1..=draws.len()).map(|i| format!("draw_{i}")));
    let cols: Vec<Vec<f64>> = (0..x.ncols()).map(|j| x.column(j).iter().copied().collect()).collect();
    let mut refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    refs.extend(draws.iter().map(|d| d.as_slice()));
    write_csv(create(out)?, &header, &refs)?;
    Ok(draws.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub m: usize,
    pub m_per_dimension: usize,
    pub half_width: f64,
    pub tail: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupErrorRow {
    pub m: usize,
    pub error: f64,
    pub x: Vec<f64>,
    pub xp: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveRow {
    pub m: usize,
    pub n: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub kernel: String,
    pub theta: Hyperparams,
    pub domain: Domain,
    pub tails: Vec<TailRow>,
    pub sup_error: Vec<SupErrorRow>,
    pub learning_curve: Vec<LearningCurveRow>,
}

impl DiagnoseReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for t in &self.tails {
            s += &format!("m = {:<5} truncation tail = {:.6e}\n", t.m, t.tail);
        }
        for e in &self.sup_error {
            s += &format!("m = {:<5} grid sup error  = {:.6e}\n", e.m, e.error);
        }
        for l in &self.learning_curve {
            s += &format!("m = {:<5} n = {:<10} eps_OV = {:.6e}\n", l.m, l.n, l.epsilon);
        }
        s
    }
}

/// Truncation tails, grid sup errors and learning curves for every
/// configured basis size.
pub fn run_diagnose(cfg: &Config, data: Option<&Path>, out: &Path) -> Result<DiagnoseReport> {
    let theta = require_theta(cfg)?;
    let domain = match (&cfg.basis.domain, data.map(PathBuf::from).or(cfg.data.path.clone())) {
        (Some(d), _) => d.clone(),
        (None, Some(path)) => {
            let ds = Dataset::read_path(&path)?;
            let names = ds.input_names(cfg.data.inputs.as_deref(), Some(&cfg.data.target))?;
            domain_from_data(&ds.select(&names)?, cfg.basis.extension)?
        }
        (None, None) => return Err(GpError::Config("diagnose needs basis.domain or a data file".into())),
    };
    let d = domain.input_dim();
    let m_values = if cfg.diagnose.m_values.is_empty() {
        vec![cfg.basis.m]
    } else {
        cfg.diagnose.m_values.clone()
    };
    let points = cfg.diagnose.grid_points.unwrap_or(match d {
        1 => 201,
        2 => 31,
        _ => 9,
    });
    let mut report = DiagnoseReport {
        kernel: cfg.kernel.name(),
        theta: theta.clone(),
        domain: domain.clone(),
        tails: Vec::new(),
        sup_error: Vec::new(),
        learning_curve: Vec::new(),
    };
    for &m in &m_values {
        let mut section = cfg.basis.clone();
        section.m = m;
        let mode = section.resolve_mode(d)?;
        let basis = build_basis(domain.clone(), m, mode)?;
        if let Domain::Hyperrectangle { .. } = domain {
            let per_dim = section.per_dimension(m, d);
            let l = domain.min_half_width();
            report.tails.push(TailRow {
                m,
                m_per_dimension: per_dim,
                half_width: l,
                tail: theorem1_tail(&cfg.kernel, &theta, d, per_dim, l)?,
            });
            let grid = SupErrorGrid::fraction_of(&domain, cfg.diagnose.grid_fraction, points)?;
            let e = kernel_sup_error(&basis, &cfg.kernel, &theta, &grid)?;
            report.sup_error.push(SupErrorRow {
                m,
                error: e.error,
                x: e.x,
                xp: e.xp,
            });
        }
        for &n in &cfg.diagnose.n_values {
            report.learning_curve.push(LearningCurveRow {
                m,
                n,
                epsilon: learning_curve_ov(&basis, &cfg.kernel, &theta, n)?,
            });
        }
    }
    write_text(out, &cfg.to_json(&report)?)?;
    Ok(report)
}
