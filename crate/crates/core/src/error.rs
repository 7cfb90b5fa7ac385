use thiserror::Error;

pub type Result<T> = std::result::Result<T, GpError>;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("input row {row}, dimension {dim} lies outside the domain (value {value}, allowed |x - c| <= {half_width})")]
    OutOfDomain {
        row: usize,
        dim: usize,
        value: f64,
        half_width: f64,
    },

    /// Cholesky factorization failed even after the maximal jitter.
    #[error("matrix is numerically singular at hyperparameters {theta}")]
    Conditioning { theta: String },

    #[error("optimization failed: {reason}")]
    Optimization {
        reason: String,
        trace: Box<crate::train::OptimizationTrace>,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GpError {
    /// Process exit code used by the command-line front-end.
    pub fn exit_code(&self) -> i32 {
        match self {
            GpError::InvalidArgument(_)
            | GpError::UnsupportedKernel(_)
            | GpError::Parse { .. }
            | GpError::Config(_)
            | GpError::Json(_) => 2,
            _ => 3,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> GpError {
    GpError::InvalidArgument(msg.into())
}
