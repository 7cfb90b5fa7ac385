//! The `hilbert-gp` command-line front-end.
//!
//! ```text
//! hilbert-gp fit      --config cfg.json --data train.csv --out model.json
//! hilbert-gp predict  --model model.json --data test.csv --out pred.csv
//! hilbert-gp cv       --config cfg.json --data data.csv --k 10 --seed 1 --out report.json
//! hilbert-gp sample   --config cfg.json --grid grid.csv --seed 7 --out draws.csv
//! hilbert-gp diagnose --config cfg.json --out diag.json
//! ```
//!
//! Exit codes: 0 success, 2 usage or parse errors, 3 runtime or numerical
//! failures. `HILBERT_GP_THREADS` caps the worker pool.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod dataset;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use artifact::ModelArtifact;
pub use commands::{run_cv, run_diagnose, run_fit, run_predict, run_sample};
pub use config::{Config, MethodName};
pub use dataset::Dataset;

use crate::error::{GpError, Result};

#[derive(Debug, Parser)]
#[command(name = "hilbert-gp", version, about = "Reduced-rank Gaussian process regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize hyperparameters and write a model file.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the fit report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Predict with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// k-fold cross-validation of one or more methods.
    Cv {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Per-fold CSV (defaults to the report path with a .csv extension).
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Comma-separated methods to compare.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<MethodName>>,
        /// Report the SMSE sum without the 1/n* factor.
        #[arg(long)]
        smse_sum: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Draw functions from the approximate prior at grid points.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Truncation tails, kernel sup errors and learning curves.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        /// Data file to derive the domain from when the config has none.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// Flags that override config-file values.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub method: Option<MethodName>,
    /// Number of basis functions.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub extension: Option<f64>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub center_y: bool,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Seed for optimizer restarts and SSGP frequencies.
    #[arg(long)]
    pub fit_seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) -> Result<()> {
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.m {
            cfg.basis.m = v;
        }
        if let Some(v) = self.extension {
            cfg.basis.extension = v;
        }
        if let Some(v) = &self.target {
            cfg.data.target = v.clone();
        }
        if self.center_y {
            cfg.data.center_y = true;
        }
        if let Some(v) = self.max_iters {
            cfg.optimizer.max_iters = v;
        }
        if let Some(v) = self.restarts {
            cfg.optimizer.restarts = v;
        }
        if let Some(v) = self.fit_seed {
            cfg.seed = v;
            cfg.optimizer.seed = v;
        }
        cfg.validate()
    }
}

fn load(path: &PathBuf, overrides: &Overrides) -> Result<Config> {
    let mut cfg = Config::read_path(path)?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

/// Runs one parsed command, printing its summary to stdout.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            config,
            data,
            out,
            report,
            overrides,
        } => {
            let cfg = load(&config, &overrides)?;
            let r = run_fit(&cfg, &data, &out)?;
            let text = cfg.to_json(&r)?;
            if let Some(path) = report {
                std::fs::write(path, &text)?;
            }
            println!("{text}");
        }
        Command::Predict { model, data, out } => {
            let rows = run_predict(&model, &data, &out)?;
            println!("wrote {rows} predictions to {}", out.display());
        }
        Command::Cv {
            config,
            data,
            k,
            seed,
            out,
            sweep,
            methods,
            smse_sum,
            overrides,
        } => {
            let mut cfg = load(&config, &overrides)?;
            if let Some(k) = k {
                cfg.cv.k = k;
            }
            if let Some(s) = seed {
                cfg.cv.seed = s;
            }
            if let Some(m) = methods {
                cfg.cv.methods = m;
            }
            if smse_sum {
                cfg.cv.smse = config::SmseNormalization::Sum;
            }
            let sweep = sweep.unwrap_or_else(|| out.with_extension("csv"));
            let r = run_cv(&cfg, &data, &out, &sweep)?;
            print!("{}", r.table());
        }
        Command::Sample {
            config,
            grid,
            seed,
            draws,
            out,
            overrides,
        } => {
            let mut cfg = load(&config, &overrides)?;
            if let Some(d) = draws {
                cfg.sample.draws = d;
            }
            let n = run_sample(&cfg, &grid, seed.unwrap_or(cfg.sample.seed), &out)?;
            println!("wrote {n} draws to {}", out.display());
        }
        Command::Diagnose {
            config,
            data,
            out,
            overrides,
        } => {
            let cfg = load(&config, &overrides)?;
            let r = run_diagnose(&cfg, data.as_deref(), &out)?;
            print!("{}", r.summary());
        }
    }
    Ok(())
}

/// Sizes the global worker pool from `HILBERT_GP_THREADS`, if set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("HILBERT_GP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| GpError::InvalidArgument(format!("HILBERT_GP_THREADS must be a positive integer, got '{v}'")))?;
    // Fails only if the pool was already built, in which case it stays as is.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match configure_threads().and_then(|_| execute(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
