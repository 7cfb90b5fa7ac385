//! Run configuration: one JSON file, overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{BasisMode, Domain};
use crate::error::{GpError, Result};
use crate::eval::{FitConfig, MethodConfig};
use crate::kernels::{Hyperparams, KernelSpec};
use crate::train::OptimizerOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: DataSection,
    pub kernel: KernelSpec,
    /// Starting point for fits; required by `sample` and `diagnose`.
    pub hyperparams: Option<Hyperparams>,
    pub basis: BasisSection,
    pub method: MethodName,
    pub ssgp: SsgpSection,
    pub optimizer: OptimizerOptions,
    pub cv: CvSection,
    pub sample: SampleSection,
    pub diagnose: DiagnoseSection,
    pub output: OutputSection,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data: DataSection::default(),
            kernel: KernelSpec::SquaredExponential,
            hyperparams: None,
            basis: BasisSection::default(),
            method: MethodName::ReducedRank,
            ssgp: SsgpSection::default(),
            optimizer: OptimizerOptions::default(),
            cv: CvSection::default(),
            sample: SampleSection::default(),
            diagnose: DiagnoseSection::default(),
            output: OutputSection::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub target: String,
    /// Input columns; every non-target column when absent.
    pub inputs: Option<Vec<String>>,
    pub center_y: bool,
    /// Data file used by `diagnose` to derive the domain.
    pub path: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            target: "y".into(),
            inputs: None,
            center_y: false,
            path: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Sorted,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSection {
    pub m: usize,
    pub mode: ModeName,
    pub extension: f64,
    /// Fixed domain; derived from the data when absent.
    pub domain: Option<Domain>,
    pub block_size: usize,
}

impl Default for BasisSection {
    fn default() -> Self {
        BasisSection {
            m: 32,
            mode: ModeName::Sorted,
            extension: 0.1,
            domain: None,
            block_size: 4096,
        }
    }
}

impl BasisSection {
    /// Resolves the mode for inputs of dimension `d`; grid mode needs
    /// `m = m̂^d`.
    pub fn resolve_mode(&self, d: usize) -> Result<BasisMode> {
        match self.mode {
            ModeName::Sorted => Ok(BasisMode::Sorted),
            ModeName::Grid => {
                let root = (self.m as f64).powf(1.0 / d as f64).round() as usize;
                if root.checked_pow(d as u32) != Some(self.m) {
                    return Err(GpError::Config(format!("grid mode needs m = m̂^{d}, got m = {}", self.m)));
                }
                Ok(BasisMode::Grid(root as u32))
            }
        }
    }

    /// Basis functions per dimension, as used by the truncation tail.
    pub fn per_dimension(&self, m: usize, d: usize) -> usize {
        ((m as f64).powf(1.0 / d as f64) + 1e-9).floor().max(1.0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    ReducedRank,
    Full,
    Ssgp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsgpSection {
    /// Number of spectral points (features come in cos/sin pairs).
    pub h: usize,
}

impl Default for SsgpSection {
    fn default() -> Self {
        SsgpSection { h: 16 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmseNormalization {
    /// `Σ(y − μ)² / (n* Var[y])`
    Mean,
    /// `Σ(y − μ)² / Var[y]`
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub k: usize,
    pub seed: u64,
    /// Methods to compare; the top-level `method` when empty.
    pub methods: Vec<MethodName>,
    pub smse: SmseNormalization,
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection {
            k: 10,
            seed: 1,
            methods: Vec::new(),
            smse: SmseNormalization::Mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub draws: usize,
    pub seed: u64,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection { draws: 1, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    /// Basis sizes to sweep; `basis.m` when empty.
    pub m_values: Vec<usize>,
    /// Hypothetical sample sizes for the learning curve.
    pub n_values: Vec<f64>,
    /// Grid points per dimension for the sup error (dimension-based default).
    pub grid_points: Option<usize>,
    /// Fraction of the half-width covered by the sup-error grid.
    pub grid_fraction: f64,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        DiagnoseSection {
            m_values: Vec::new(),
            n_values: vec![0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0],
            grid_points: None,
            grid_fraction: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub pretty: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { pretty: true }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| GpError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GpError::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_json(&text).map_err(|e| match e {
            GpError::Config(msg) => GpError::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.basis.m == 0 {
            return Err(GpError::Config("basis.m must be >= 1".into()));
        }
        if !(self.basis.extension >= 0.0 && self.basis.extension.is_finite()) {
            return Err(GpError::Config("basis.extension must be >= 0".into()));
        }
        if self.basis.block_size == 0 {
            return Err(GpError::Config("basis.block_size must be >= 1".into()));
        }
        if self.ssgp.h == 0 {
            return Err(GpError::Config("ssgp.h must be >= 1".into()));
        }
        if let Some(t) = &self.hyperparams {
            t.validate(&self.kernel).map_err(|e| GpError::Config(format!("hyperparams: {e}")))?;
        }
        self.optimizer.validate().map_err(|e| GpError::Config(format!("optimizer: {e}")))?;
        Ok(())
    }

    pub fn method_config(&self, method: MethodName, d: usize) -> Result<MethodConfig> {
        Ok(match method {
            MethodName::ReducedRank => MethodConfig::ReducedRank {
                m: self.basis.m,
                mode: self.basis.resolve_mode(d)?,
                extension: self.basis.extension,
            },
            MethodName::Full => MethodConfig::Full,
            MethodName::Ssgp => MethodConfig::Ssgp { h: self.ssgp.h },
        })
    }

    pub fn fit_config(&self, method: MethodName, d: usize) -> Result<FitConfig> {
        Ok(FitConfig {
            method: self.method_config(method, d)?,
            kernel: self.kernel.clone(),
            theta0: self.hyperparams.clone(),
            optimizer: self.optimizer.clone(),
            center_y: self.data.center_y,
            seed: self.seed,
        })
    }

    pub fn to_json(&self, value: &impl Serialize) -> Result<String> {
        Ok(if self.output.pretty {
            serde_json::to_string_pretty(value)?
        } else {
            serde_json::to_string(value)?
        })
    }
}
