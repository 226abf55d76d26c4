use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command-line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorClass {
    /// Bad configuration: spaces, plans, stage files, rules, flags.
    Config,
    /// Bad or insufficient data: curves, designs, bundles.
    Data,
    /// A computation failed: simulations, solves.
    Compute,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Compute => "compute",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid normalization rule: degenerate interval <{lower}, {upper}>")]
    InvalidRule { lower: f64, upper: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    #[error("strain {strain} outside curve range [{first}, {last}]")]
    Extrapolation { strain: f64, first: f64, last: f64 },

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("correlation undefined: {0} is constant")]
    UndefinedCorrelation(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("stage `{stage}`: cannot evaluate feature {feature}: {reason}")]
    MissingFeature {
        stage: String,
        feature: String,
        reason: String,
    },

    #[error("every simulation in the batch failed ({0} rows)")]
    EmptyBundle(usize),

    #[error("model failure: {0}")]
    Model(#[from] crate::models::ModelFailure),

    #[error("coupled solve found no intersection: residual {residual:.3e} at ({p}, {q})")]
    NoIntersection { residual: f64, p: f64, q: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidSpace(_)
            | Error::UnknownParameter(_)
            | Error::InvalidRule { .. }
            | Error::InvalidConfig(_)
            | Error::InvalidPlan(_) => ErrorClass::Config,
            Error::InvalidCurve(_)
            | Error::DegenerateCurve(_)
            | Error::Extrapolation { .. }
            | Error::Shape { .. }
            | Error::UndefinedCorrelation(_)
            | Error::InsufficientData(_)
            | Error::MissingFeature { .. }
            | Error::EmptyBundle(_)
            | Error::Io { .. }
            | Error::Parse { .. } => ErrorClass::Data,
            Error::Model(_) | Error::NoIntersection { .. } => ErrorClass::Compute,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
