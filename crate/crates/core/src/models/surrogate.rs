//! Popovics-type analytic stress-strain curve with an exact peak.

use serde::{Deserialize, Serialize};

use super::{ForwardModel, ModelFailure, ModelResult};
use crate::{Error, ParamPoint, ResponseCurve, Result};

/// `σ(ε) = f_c · r · m / (m − 1 + r^m)` with `r = ε/ε_p`.
pub fn popovics_stress(strain: f64, f_c: f64, eps_p: f64, m: f64) -> f64 {
    if strain == 0.0 {
        return 0.0;
    }
    let r = strain / eps_p;
    f_c * r * m / (m - 1.0 + r.powf(m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrainGrid {
    Uniform { start: f64, stop: f64, points: usize },
    Explicit(Vec<f64>),
}

impl StrainGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            StrainGrid::Uniform { start, stop, points } => {
                let last = (*points - 1) as f64;
                (0..*points)
                    .map(|k| start + (stop - start) * (k as f64) / last)
                    .collect()
            }
            StrainGrid::Explicit(v) => v.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StrainGrid::Uniform { start, stop, points } => {
                if *points < 2 || !(start < stop) || !start.is_finite() || !stop.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "strain grid needs start < stop and at least 2 points, got [{start}, {stop}] × {points}"
                    )));
                }
            }
            StrainGrid::Explicit(v) => {
                if v.len() < 2 || v.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::InvalidConfig(
                        "explicit strain grid must be strictly increasing with at least 2 points".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Surrogate with parameters `f_c` (peak stress), `eps_p` (peak strain) and
/// `m` (shape exponent, > 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSpec {
    pub strain_grid: StrainGrid,
}

impl SurrogateSpec {
    pub const PARAMETERS: [&'static str; 3] = ["f_c", "eps_p", "m"];

    pub fn new(strain_grid: StrainGrid) -> Result<Self> {
        let spec = SurrogateSpec { strain_grid };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.strain_grid.validate()
    }
}

/// Evaluates the surrogate on its grid.
pub fn surrogate_curve(spec: &SurrogateSpec, point: &ParamPoint) -> Result<ResponseCurve> {
    Ok(spec.evaluate(point)?)
}

impl ForwardModel for SurrogateSpec {
    fn evaluate(&self, point: &ParamPoint) -> ModelResult {
        let get = |name: &str| {
            point
                .get(name)
                .ok_or_else(|| ModelFailure::invalid(format!("missing parameter `{name}`")))
        };
        let (f_c, eps_p, m) = (get("f_c")?, get("eps_p")?, get("m")?);
        if !(m > 1.0) || !m.is_finite() {
            return Err(ModelFailure::invalid(format!("shape exponent m must exceed 1, got {m}")));
        }
        if !(f_c > 0.0 && eps_p > 0.0) || !f_c.is_finite() || !eps_p.is_finite() {
            return Err(ModelFailure::invalid(format!(
                "f_c and eps_p must be positive, got {f_c} and {eps_p}"
            )));
        }
        let strain = self.strain_grid.values();
        let stress = strain.iter().map(|&e| popovics_stress(e, f_c, eps_p, m)).collect();
        ResponseCurve::new(strain, stress).map_err(|e| ModelFailure::invalid(e.to_string()))
    }

    fn fingerprint(&self) -> String {
        format!(
            "popovics:{}",
            serde_json::to_string(self).expect("surrogate spec serializes")
        )
    }
}
