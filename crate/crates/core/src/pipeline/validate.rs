//! Relative-to-interval validation of a trained stage.

use serde::{Deserialize, Serialize};

use crate::ann::{Network, Pattern};
use crate::{Error, NormalizationRule, Parameter, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCase {
    pub truth: f64,
    pub predicted: f64,
    /// `|predicted − truth|` in physical units.
    pub abs_error: f64,
    /// `abs_error / (upper − lower)`.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub parameter: String,
    pub lower: f64,
    pub upper: f64,
    pub band: f64,
    pub cases: Vec<ValidationCase>,
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
    pub mean_rel_error: f64,
    pub max_rel_error: f64,
    /// `max_rel_error <= band`.
    pub pass: bool,
}

impl ValidationReport {
    pub fn from_predictions(parameter: &Parameter, truth: &[f64], predicted: &[f64], band: f64) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape {
                what: "validation cases",
                expected: truth.len(),
                found: predicted.len(),
            });
        }
        if truth.is_empty() {
            return Err(Error::InsufficientData("validation needs at least one test case".into()));
        }
        let width = parameter.width();
        let cases: Vec<ValidationCase> = truth
            .iter()
            .zip(predicted)
            .map(|(&t, &p)| {
                let abs_error = (p - t).abs();
                ValidationCase { truth: t, predicted: p, abs_error, rel_error: abs_error / width }
            })
            .collect();
        let n = cases.len() as f64;
        let max = |f: fn(&ValidationCase) -> f64| cases.iter().map(f).fold(0.0, f64::max);
        let mean = |f: fn(&ValidationCase) -> f64| cases.iter().map(f).sum::<f64>() / n;
        let max_rel_error = max(|c| c.rel_error);
        Ok(ValidationReport {
            parameter: parameter.name.clone(),
            lower: parameter.lower,
            upper: parameter.upper,
            band,
            mean_abs_error: mean(|c| c.abs_error),
            max_abs_error: max(|c| c.abs_error),
            mean_rel_error: mean(|c| c.rel_error),
            max_rel_error,
            pass: max_rel_error <= band,
            cases,
        })
    }
}

/// Predicts every test pattern and compares against `truth` (physical units).
pub fn validate_stage(
    net: &Network,
    test: &[Pattern],
    truth: &[f64],
    target_rule: &NormalizationRule,
    parameter: &Parameter,
    band: f64,
) -> Result<ValidationReport> {
    let predicted = test
        .iter()
        .map(|p| Ok(target_rule.denormalize(net.propagate(&p.input)?[0])))
        .collect::<Result<Vec<_>>>()?;
    ValidationReport::from_predictions(parameter, truth, &predicted, band)
}
