//! Fitted-model files: JSON with base64 little-endian `f64` arrays.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{Basis, Domain, EigenIndex};
use crate::error::{GpError, Result};
use crate::eval::{FitOutcome, FittedModel};
use crate::kernels::{Hyperparams, KernelSpec};
use crate::model::{predict, FitState, Prediction, Summary};
use crate::reference::{full_gp_predict, ssgp_predict_summary, SpectralPoints};

pub const FORMAT_NAME: &str = "hilbert-gp-model";
pub const FORMAT_VERSION: u32 = 1;

/// Column-major `f64` matrix, base64 of the little-endian bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedArray {
    pub rows: usize,
    pub cols: usize,
    pub data: String,
}

impl EncodedArray {
    pub fn encode(rows: usize, cols: usize, values: &[f64]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        EncodedArray {
            rows,
            cols,
            data: STANDARD.encode(bytes),
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        EncodedArray::encode(m.nrows(), m.ncols(), m.as_slice())
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        EncodedArray::encode(v.len(), 1, v.as_slice())
    }

    pub fn decode(&self) -> Result<Vec<f64>> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| GpError::ModelFile(format!("bad base64 array: {e}")))?;
        let expected = self.rows.checked_mul(self.cols).and_then(|n| n.checked_mul(8));
        if expected != Some(bytes.len()) {
            return Err(GpError::ModelFile(format!(
                "array of shape {}×{} holds {} bytes",
                self.rows,
                self.cols,
                bytes.len()
            )));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_vec(self.rows, self.cols, self.decode()?))
    }

    pub fn to_vector(&self) -> Result<DVector<f64>> {
        if self.cols != 1 {
            return Err(GpError::ModelFile(format!("expected a vector, found {} columns", self.cols)));
        }
        Ok(DVector::from_vec(self.decode()?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Payload {
    ReducedRank {
        domain: Domain,
        indices: Vec<EigenIndex>,
        eigenvalues: EncodedArray,
        gram: EncodedArray,
        proj: EncodedArray,
        yty: f64,
        n: usize,
    },
    /// Feature statistics at the fitted length-scale.
    Ssgp {
        unit_frequencies: EncodedArray,
        frequency_seed: u64,
        gram: EncodedArray,
        proj: EncodedArray,
        yty: f64,
        n: usize,
    },
    /// The exact GP keeps its training data.
    Full { x: EncodedArray, y: EncodedArray },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub format_version: u32,
    pub created_by: String,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub theta: Hyperparams,
    pub input_columns: Vec<String>,
    pub target: String,
    /// Added back to predicted means (training mean when `y` was centered).
    pub y_offset: f64,
    pub payload: Payload,
}

fn summary_parts(s: &Summary) -> (EncodedArray, EncodedArray, f64, usize) {
    (EncodedArray::from_matrix(&s.gram), EncodedArray::from_vector(&s.proj), s.yty, s.n)
}

impl ModelArtifact {
    pub fn from_outcome(outcome: &FitOutcome, input_columns: Vec<String>, target: String, seed: u64) -> Self {
        let payload = match &outcome.model {
            FittedModel::ReducedRank { fit, .. } => {
                let (gram, proj, yty, n) = summary_parts(&fit.summary);
                Payload::ReducedRank {
                    domain: fit.basis.domain.clone(),
                    indices: fit.basis.indices.clone(),
                    eigenvalues: EncodedArray::encode(fit.basis.len(), 1, &fit.basis.eigenvalues),
                    gram,
                    proj,
                    yty,
                    n,
                }
            }
            FittedModel::Ssgp { fit, theta } => {
                let (gram, proj, yty, n) = summary_parts(&fit.summary(theta.lengthscale()));
                Payload::Ssgp {
                    unit_frequencies: EncodedArray::from_matrix(&fit.points.unit_frequencies),
                    frequency_seed: fit.points.seed,
                    gram,
                    proj,
                    yty,
                    n,
                }
            }
            FittedModel::Full { x, y, .. } => Payload::Full {
                x: EncodedArray::from_matrix(x),
                y: EncodedArray::from_vector(y),
            },
        };
        ModelArtifact {
            format: FORMAT_NAME.into(),
            format_version: FORMAT_VERSION,
            created_by: format!("hilbert-gp {}", env!("CARGO_PKG_VERSION")),
            seed,
            kernel: outcome.kernel.clone(),
            theta: outcome.theta.clone(),
            input_columns,
            target,
            y_offset: outcome.y_offset,
            payload,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a model file, refusing unknown formats and versions before
    /// reading anything else.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| GpError::ModelFile(format!("not valid JSON: {e}")))?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(FORMAT_NAME) => {}
            other => {
                return Err(GpError::ModelFile(format!(
                    "not a {FORMAT_NAME} file (format field: {other:?})"
                )))
            }
        }
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(GpError::ModelFile(format!(
                    "model file format version {v} is not supported (this build reads version {FORMAT_VERSION})"
                )))
            }
            None => return Err(GpError::ModelFile("model file has no format_version".into())),
        }
        serde_json::from_value(value).map_err(|e| GpError::ModelFile(e.to_string()))
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GpError::ModelFile(format!("cannot read {}: {e}", path.display())))?;
        ModelArtifact::from_json(&text)
    }

    fn summary(gram: &EncodedArray, proj: &EncodedArray, yty: f64, n: usize) -> Result<Summary> {
        let gram = gram.to_matrix()?;
        let proj = proj.to_vector()?;
        if gram.nrows() != gram.ncols() || gram.nrows() != proj.len() {
            return Err(GpError::ModelFile("gram and projection shapes disagree".into()));
        }
        Ok(Summary { gram, proj, yty, n })
    }

    pub fn predict(&self, x_star: &DMatrix<f64>) -> Result<Prediction> {
        self.theta.validate(&self.kernel)?;
        let mut p = match &self.payload {
            Payload::ReducedRank {
                domain,
                indices,
                eigenvalues,
                gram,
                proj,
                yty,
                n,
            } => {
                let basis = Basis::from_indices(domain.clone(), indices.clone())?;
                let stored = eigenvalues.decode()?;
                let consistent = stored.len() == basis.len()
                    && stored
                        .iter()
                        .zip(&basis.eigenvalues)
                        .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0));
                if !consistent {
                    return Err(GpError::ModelFile("stored eigenvalues do not match the basis indices".into()));
                }
                let fit = FitState {
                    basis,
                    summary: Self::summary(gram, proj, *yty, *n)?,
                    data: None,
                };
                predict(&fit, &self.kernel, &self.theta, x_star)?
            }
            Payload::Ssgp {
                unit_frequencies,
                frequency_seed,
                gram,
                proj,
                yty,
                n,
            } => {
                let mut points = SpectralPoints::from_frequencies(unit_frequencies.to_matrix()?)?;
                points.seed = *frequency_seed;
                ssgp_predict_summary(&points, &Self::summary(gram, proj, *yty, *n)?, &self.theta, x_star)?
            }
            Payload::Full { x, y } => full_gp_predict(&x.to_matrix()?, &y.to_vector()?, &self.kernel, &self.theta, x_star)?,
        };
        p.mean.add_scalar_mut(self.y_offset);
        Ok(p)
    }
}
