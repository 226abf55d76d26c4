//! Parameter spaces (the identification unknowns) and named parameter points.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One identification unknown with its box bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Parameter {
            name: name.into(),
            lower,
            upper,
            unit: None,
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }
}

#[derive(Deserialize)]
struct RawSpace {
    params: Vec<Parameter>,
}

/// Ordered list of named parameters with `lower < upper` and unique names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct ParameterSpace {
    params: Vec<Parameter>,
}

impl TryFrom<RawSpace> for ParameterSpace {
    type Error = Error;

    fn try_from(raw: RawSpace) -> Result<Self> {
        ParameterSpace::new(raw.params)
    }
}

impl ParameterSpace {
    pub fn new(params: Vec<Parameter>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &params {
            if p.name.is_empty() {
                return Err(Error::InvalidSpace("empty parameter name".into()));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(Error::InvalidSpace(format!(
                    "duplicate parameter `{}`",
                    p.name
                )));
            }
            if !(p.lower.is_finite() && p.upper.is_finite() && p.lower < p.upper) {
                return Err(Error::InvalidSpace(format!(
                    "parameter `{}` needs finite lower < upper, got <{}, {}>",
                    p.name, p.lower, p.upper
                )));
            }
        }
        Ok(ParameterSpace { params })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Parameter> {
        self.params.iter()
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&Parameter> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Sub-space made of the parameters NOT listed in `excluded`, in the original order.
    pub fn without(&self, excluded: &[&str]) -> Result<ParameterSpace> {
        for name in excluded {
            self.get(name)?;
        }
        ParameterSpace::new(
            self.params
                .iter()
                .filter(|p| !excluded.contains(&p.name.as_str()))
                .cloned()
                .collect(),
        )
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidSpace(e.to_string()))
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => Error::InvalidSpace(format!("{}: {e}", path.display())),
            _ => Error::parse(path, e),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameter space serializes")
    }
}

/// A named parameter point, in a stable order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint(Vec<(String, f64)>);

impl ParamPoint {
    pub fn new() -> Self {
        ParamPoint(Vec::new())
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut point = ParamPoint::new();
        for (name, value) in pairs {
            point.set(name, value);
        }
        point
    }

    /// Inserts or overwrites `name`.
    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        let name = name.into();
        match self.0.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = value,
            None => self.0.push((name, value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn require(&self, name: &str) -> Result<f64> {
        self.get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(n, v)| (n.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
