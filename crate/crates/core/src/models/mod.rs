//! Forward models: parameter point in, response curve out.

mod batch;
mod external;
mod surrogate;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::read_config_json;
use crate::{ParamPoint, ResponseCurve, Result};

pub use batch::{load_bundle, run_batch, save_bundle, BundleFile, BundleRow, BUNDLE_FORMAT, DEFAULT_WORKERS};
pub use external::{ExternalModelSpec, SCRATCH_ENV};
pub use surrogate::{popovics_stress, surrogate_curve, StrainGrid, SurrogateSpec};

/// Why a single simulation produced no curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelFailure {
    #[error("timed out after {seconds} s")]
    Timeout { seconds: f64 },
    #[error("exited with {status}: {stderr_tail}")]
    ExitCode { status: String, stderr_tail: String },
    #[error("unreadable output: {message}")]
    Parse { message: String },
    #[error("could not start: {message}")]
    Spawn { message: String },
    #[error("invalid input: {message}")]
    Invalid { message: String },
}

impl ModelFailure {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        ModelFailure::Invalid {
            message: message.into(),
        }
    }
}

pub type ModelResult = std::result::Result<ResponseCurve, ModelFailure>;

/// Anything that maps a parameter point to a response curve. Implementations
/// must be safe to call from several threads at once.
pub trait ForwardModel: Sync {
    fn evaluate(&self, point: &ParamPoint) -> ModelResult;

    /// Like [`ForwardModel::evaluate`] for design row `row`; external models
    /// use the row to name their working directory.
    fn evaluate_row(&self, _row: usize, point: &ParamPoint) -> ModelResult {
        self.evaluate(point)
    }

    /// Stable description of the model configuration, used in cache keys.
    fn fingerprint(&self) -> String;
}

/// Model configuration as stored in JSON files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    Popovics(SurrogateSpec),
    External(ExternalModelSpec),
}

impl ModelSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let spec: ModelSpec = read_config_json(path)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Popovics(s) => s.validate(),
            ModelSpec::External(s) => s.validate(),
        }
    }
}

impl ForwardModel for ModelSpec {
    fn evaluate(&self, point: &ParamPoint) -> ModelResult {
        match self {
            ModelSpec::Popovics(s) => s.evaluate(point),
            ModelSpec::External(s) => s.evaluate(point),
        }
    }

    fn evaluate_row(&self, row: usize, point: &ParamPoint) -> ModelResult {
        match self {
            ModelSpec::Popovics(s) => s.evaluate_row(row, point),
            ModelSpec::External(s) => s.evaluate_row(row, point),
        }
    }

    fn fingerprint(&self) -> String {
        serde_json::to_string(self).expect("model spec serializes")
    }
}
