//! Inverse identification of simulation-model parameters from response curves.
//!
//! The crate covers the whole identification chain:
//!
//! - [`doe`]: Latin Hypercube designs over a [`ParameterSpace`] with
//!   simulated-annealing reduction of spurious column correlation.
//! - [`models`]: forward models turning a parameter point into a
//!   [`ResponseCurve`] (an analytic Popovics surrogate and a file-based
//!   adapter for external simulators), plus batch execution.
//! - [`stats`]: Pearson correlation and stochastic sensitivity of curve
//!   bundles.
//! - [`ann`]: layered feed-forward networks with bias neurons.
//! - [`grade`]: the GRADE evolutionary minimizer with CERAF restarts, used
//!   to train the networks.
//! - [`pipeline`]: staged (nested) identification plans, training-set
//!   assembly, validation, and the coupled two-network solve.

pub mod ann;
pub mod curve;
pub mod doe;
mod error;
pub mod grade;
pub mod io;
pub mod models;
pub mod normalize;
pub mod pipeline;
pub mod space;
pub mod stats;

pub use curve::{CurveFeature, Peak, ResponseCurve, YieldPoint};
pub use error::{Error, ErrorClass, Result};
pub use normalize::{Interval, NormalizationRule};
pub use space::{ParamPoint, Parameter, ParameterSpace};

/// Version string recorded in run manifests.
pub const TOOL_VERSION: &str = concat!("paramid ", env!("CARGO_PKG_VERSION"));
