//! Response curves and the features extracted from them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default secant-modulus drop that marks the end of the elastic stage.
pub const DEFAULT_YIELD_TOLERANCE: f64 = 0.05;

/// A stress-strain curve on its native grid.
///
/// Strain is strictly increasing, both columns have equal length ≥ 2 and
/// every stress value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCurve {
    strain: Vec<f64>,
    stress: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub strain: f64,
    pub stress: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YieldPoint {
    pub strain: f64,
    pub stress: f64,
    /// `false` when the secant modulus never dropped below the threshold;
    /// the point is then the last grid point.
    pub yielded: bool,
}

impl ResponseCurve {
    pub fn new(strain: Vec<f64>, stress: Vec<f64>) -> Result<Self> {
        if strain.len() != stress.len() {
            return Err(Error::Shape {
                what: "curve columns",
                expected: strain.len(),
                found: stress.len(),
            });
        }
        if strain.len() < 2 {
            return Err(Error::InvalidCurve(format!(
                "need at least 2 points, got {}",
                strain.len()
            )));
        }
        if let Some(i) = strain.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidCurve(format!("non-finite strain at row {i}")));
        }
        if let Some(i) = stress.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidCurve(format!("non-finite stress at row {i}")));
        }
        if let Some(i) = strain.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidCurve(format!(
                "strain not strictly increasing at row {}",
                i + 1
            )));
        }
        Ok(ResponseCurve {
            strain,
            stress,
            meta: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn len(&self) -> usize {
        self.strain.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn strain(&self) -> &[f64] {
        &self.strain
    }

    pub fn stress(&self) -> &[f64] {
        &self.stress
    }

    pub fn first_strain(&self) -> f64 {
        self.strain[0]
    }

    pub fn last_strain(&self) -> f64 {
        self.strain[self.strain.len() - 1]
    }

    /// Grid point of maximum stress; ties go to the smaller strain.
    pub fn peak(&self) -> Peak {
        let mut best = 0;
        for i in 1..self.len() {
            if self.stress[i] > self.stress[best] {
                best = i;
            }
        }
        Peak {
            strain: self.strain[best],
            stress: self.stress[best],
        }
    }

    /// End of the elastic stage: the first grid point whose secant modulus
    /// `σ/ε` drops below `(1 - deviation_tol)` times the initial tangent.
    ///
    /// The initial tangent is the slope between the first two nonzero-strain
    /// points. Results are always grid points, never interpolated.
    pub fn yield_point(&self, deviation_tol: f64) -> Result<YieldPoint> {
        if !(deviation_tol > 0.0 && deviation_tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "yield tolerance must lie in (0, 1), got {deviation_tol}"
            )));
        }
        if self.len() < 3 {
            return Err(Error::DegenerateCurve(
                "yield detection needs at least 3 points".into(),
            ));
        }
        if self.stress.iter().all(|&s| s == 0.0) {
            return Err(Error::DegenerateCurve("all stresses are zero".into()));
        }
        let nonzero: Vec<usize> = (0..self.len()).filter(|&i| self.strain[i] != 0.0).collect();
        if nonzero.len() < 2 {
            return Err(Error::DegenerateCurve(
                "need two nonzero-strain points for the initial tangent".into(),
            ));
        }
        let (a, b) = (nonzero[0], nonzero[1]);
        let tangent = (self.stress[b] - self.stress[a]) / (self.strain[b] - self.strain[a]);
        if !(tangent.is_finite() && tangent > 0.0) {
            return Err(Error::DegenerateCurve(format!(
                "initial tangent modulus {tangent} is not positive"
            )));
        }
        let threshold = (1.0 - deviation_tol) * tangent;
        for &i in &nonzero {
            if self.stress[i] / self.strain[i] < threshold {
                return Ok(YieldPoint {
                    strain: self.strain[i],
                    stress: self.stress[i],
                    yielded: true,
                });
            }
        }
        let last = self.len() - 1;
        Ok(YieldPoint {
            strain: self.strain[last],
            stress: self.stress[last],
            yielded: false,
        })
    }

    /// Piecewise-linear stress at `strain`; exact at grid points.
    pub fn stress_at_strain(&self, strain: f64) -> Result<f64> {
        let (first, last) = (self.first_strain(), self.last_strain());
        if !(strain >= first && strain <= last) {
            return Err(Error::Extrapolation {
                strain,
                first,
                last,
            });
        }
        // first index with grid strain >= query
        let hi = self.strain.partition_point(|&s| s < strain);
        if self.strain[hi] == strain {
            return Ok(self.stress[hi]);
        }
        let lo = hi - 1;
        let t = (strain - self.strain[lo]) / (self.strain[hi] - self.strain[lo]);
        Ok(self.stress[lo] + t * (self.stress[hi] - self.stress[lo]))
    }

    /// Stress stored at a 0-based grid index.
    pub fn stress_at_index(&self, index: usize) -> Result<f64> {
        self.stress.get(index).copied().ok_or(Error::Shape {
            what: "curve index",
            expected: self.len(),
            found: index,
        })
    }

    pub fn resample(&self, grid: &[f64]) -> Result<ResponseCurve> {
        let stress = grid
            .iter()
            .map(|&s| self.stress_at_strain(s))
            .collect::<Result<Vec<_>>>()?;
        let mut out = ResponseCurve::new(grid.to_vec(), stress)?;
        out.meta = self.meta.clone();
        Ok(out)
    }
}

pub fn extract_peak(curve: &ResponseCurve) -> Peak {
    curve.peak()
}

pub fn extract_yield(curve: &ResponseCurve, deviation_tol: f64) -> Result<YieldPoint> {
    curve.yield_point(deviation_tol)
}

fn default_yield_tolerance() -> f64 {
    DEFAULT_YIELD_TOLERANCE
}

/// A scalar read off a response curve (or a known parameter value) that
/// feeds one network input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveFeature {
    /// Stress at a 0-based grid index.
    StressAtIndex { index: usize },
    /// Interpolated stress at a strain value.
    StressAtStrain { strain: f64 },
    PeakStrain,
    PeakStress,
    YieldStrain {
        #[serde(default = "default_yield_tolerance")]
        tolerance: f64,
    },
    YieldStress {
        #[serde(default = "default_yield_tolerance")]
        tolerance: f64,
    },
    /// Value of another parameter: the true value while training, an earlier
    /// estimate (or frozen value) while identifying.
    KnownParameter { name: String },
}

impl CurveFeature {
    pub fn known(name: impl Into<String>) -> Self {
        CurveFeature::KnownParameter { name: name.into() }
    }

    pub fn yield_strain() -> Self {
        CurveFeature::YieldStrain {
            tolerance: DEFAULT_YIELD_TOLERANCE,
        }
    }

    pub fn yield_stress() -> Self {
        CurveFeature::YieldStress {
            tolerance: DEFAULT_YIELD_TOLERANCE,
        }
    }

    /// Name of the referenced parameter for `known_parameter` features.
    pub fn parameter(&self) -> Option<&str> {
        match self {
            CurveFeature::KnownParameter { name } => Some(name),
            _ => None,
        }
    }

    /// Evaluates the feature. `known` resolves parameter names for
    /// `known_parameter` features.
    pub fn evaluate(
        &self,
        curve: &ResponseCurve,
        known: &dyn Fn(&str) -> Option<f64>,
    ) -> Result<f64> {
        match self {
            CurveFeature::StressAtIndex { index } => curve.stress_at_index(*index),
            CurveFeature::StressAtStrain { strain } => curve.stress_at_strain(*strain),
            CurveFeature::PeakStrain => Ok(curve.peak().strain),
            CurveFeature::PeakStress => Ok(curve.peak().stress),
            CurveFeature::YieldStrain { tolerance } => Ok(curve.yield_point(*tolerance)?.strain),
            CurveFeature::YieldStress { tolerance } => Ok(curve.yield_point(*tolerance)?.stress),
            CurveFeature::KnownParameter { name } => {
                known(name).ok_or_else(|| Error::UnknownParameter(name.clone()))
            }
        }
    }
}

impl fmt::Display for CurveFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveFeature::StressAtIndex { index } => write!(f, "stress_at_index({index})"),
            CurveFeature::StressAtStrain { strain } => write!(f, "stress_at_strain({strain})"),
            CurveFeature::PeakStrain => f.write_str("peak_strain"),
            CurveFeature::PeakStress => f.write_str("peak_stress"),
            CurveFeature::YieldStrain { .. } => f.write_str("yield_strain"),
            CurveFeature::YieldStress { .. } => f.write_str("yield_stress"),
            CurveFeature::KnownParameter { name } => write!(f, "known_parameter({name})"),
        }
    }
}
