//! Identification plans: ordered stages, each training one network for one
//! parameter.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ann::{Activation, Topology, DEFAULT_GAIN};
use crate::doe::AnnealConfig;
use crate::grade::{CerafConfig, GradeConfig};
use super::train::TrainConfig;
use crate::io::read_config_json;
use crate::models::{ExternalModelSpec, ModelSpec, DEFAULT_WORKERS};
use crate::{CurveFeature, Error, ParamPoint, ParameterSpace, Result};

pub const PLAN_FORMAT: &str = "paramid.plan.v1";

pub const DEFAULT_WEIGHT_BOUND: f64 = 15.0;
pub const DEFAULT_VALIDATION_BAND: f64 = 0.05;
pub const DEFAULT_FITNESS_CALLS: u64 = 1_000_000;

/// Value of a frozen parameter: a number, or `"identified"` to take the
/// estimate produced by an earlier stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Frozen {
    Value(f64),
    Keyword(FrozenKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrozenKeyword {
    Identified,
}

impl Frozen {
    pub const IDENTIFIED: Frozen = Frozen::Keyword(FrozenKeyword::Identified);

    pub fn value(self) -> Option<f64> {
        match self {
            Frozen::Value(v) => Some(v),
            Frozen::Keyword(_) => None,
        }
    }
}

fn default_gain() -> f64 {
    DEFAULT_GAIN
}

fn default_calls() -> u64 {
    DEFAULT_FITNESS_CALLS
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub name: String,
    pub target: String,
    /// Key into the plan's `models`.
    pub model: String,
    /// Neurons per layer, input layer first.
    pub layout: Vec<usize>,
    pub features: Vec<CurveFeature>,
    #[serde(default)]
    pub frozen: BTreeMap<String, Frozen>,
    pub train_count: usize,
    pub test_count: usize,
    /// Seeds the design, the train/test split and the optimizer.
    pub seed: u64,
    #[serde(default = "default_calls")]
    pub max_fitness_calls: u64,
    #[serde(default = "default_gain")]
    pub gain: f64,
    #[serde(default)]
    pub activation: Activation,
    /// Decorrelate the stage design before simulating.
    #[serde(default = "default_true")]
    pub anneal: bool,
    /// Partner stage for a coupled two-network solve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupled_with: Option<String>,
}

impl StageSpec {
    pub fn topology(&self) -> Result<Topology> {
        Topology::with_gain(self.layout.clone(), self.gain)
    }

    /// Number of simulations the stage design needs.
    pub fn samples(&self) -> usize {
        self.train_count + self.test_count
    }

    /// Frozen parameters that take an earlier stage's estimate.
    pub fn identified(&self) -> impl Iterator<Item = &str> {
        self.frozen
            .iter()
            .filter(|(_, f)| f.value().is_none())
            .map(|(n, _)| n.as_str())
    }

    /// Whether the stage must be retrained for every measurement.
    pub fn is_deferred(&self) -> bool {
        self.identified().next().is_some()
    }

    /// Parameter names referenced by `known_parameter` features.
    pub fn known_parameters(&self) -> impl Iterator<Item = &str> {
        self.features.iter().filter_map(CurveFeature::parameter)
    }

    /// Frozen values with `"identified"` entries resolved from `estimates`.
    pub fn resolve_frozen(&self, estimates: &dyn Fn(&str) -> Option<f64>) -> Result<ParamPoint> {
        let mut point = ParamPoint::new();
        for (name, f) in &self.frozen {
            let v = match f.value() {
                Some(v) => v,
                None => estimates(name).ok_or_else(|| {
                    Error::InvalidPlan(format!(
                        "stage `{}`: `{name}` is frozen as identified but has no estimate",
                        self.name
                    ))
                })?,
            };
            point.set(name.clone(), v);
        }
        Ok(point)
    }
}

/// Optional screening run: a design over the whole space, simulated and
/// analysed for sensitivity before any stage trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreeningSpec {
    pub model: String,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub frozen: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentificationPlan {
    pub format: String,
    pub space: ParameterSpace,
    pub models: BTreeMap<String, ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screening: Option<ScreeningSpec>,
    #[serde(default)]
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub grade: GradeConfig,
    #[serde(default)]
    pub ceraf: CerafConfig,
    #[serde(default)]
    pub anneal: AnnealConfig,
    #[serde(default = "default_weight_bound")]
    pub weight_bound: f64,
    #[serde(default = "default_band")]
    pub validation_band: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Points on the common strain grid used for sensitivity traces.
    #[serde(default = "default_sensitivity_points")]
    pub sensitivity_points: usize,
    /// Log train/test error every this many generations.
    #[serde(default = "default_log_every")]
    pub log_every: u64,
}

fn default_weight_bound() -> f64 {
    DEFAULT_WEIGHT_BOUND
}

fn default_band() -> f64 {
    DEFAULT_VALIDATION_BAND
}

fn default_workers() -> usize {
    DEFAULT_WORKERS
}

fn default_sensitivity_points() -> usize {
    50
}

fn default_log_every() -> u64 {
    100
}

impl IdentificationPlan {
    pub fn new(space: ParameterSpace, models: BTreeMap<String, ModelSpec>, stages: Vec<StageSpec>) -> Self {
        IdentificationPlan {
            format: PLAN_FORMAT.to_string(),
            space,
            models,
            screening: None,
            stages,
            grade: GradeConfig::default(),
            ceraf: CerafConfig::default(),
            anneal: AnnealConfig::default(),
            weight_bound: DEFAULT_WEIGHT_BOUND,
            validation_band: DEFAULT_VALIDATION_BAND,
            workers: DEFAULT_WORKERS,
            sensitivity_points: default_sensitivity_points(),
            log_every: default_log_every(),
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let plan: IdentificationPlan = read_config_json(path)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let plan: IdentificationPlan =
            serde_json::from_str(text).map_err(|e| Error::InvalidPlan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Plan-wide training settings before per-stage budgets and seeds.
    pub fn train_defaults(&self) -> TrainConfig {
        TrainConfig {
            grade: self.grade.clone(),
            ceraf: self.ceraf.clone(),
            weight_bound: self.weight_bound,
            log_every: self.log_every,
        }
    }

    pub fn stage(&self, name: &str) -> Result<&StageSpec> {
        self.stages
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::InvalidPlan(format!("no stage named `{name}`")))
    }

    pub fn model(&self, name: &str) -> Result<&ModelSpec> {
        self.models
            .get(name)
            .ok_or_else(|| Error::InvalidPlan(format!("no model named `{name}`")))
    }

    /// Parameters a stage design varies: everything not frozen.
    pub fn varied_space(&self, stage: &StageSpec) -> Result<ParameterSpace> {
        let frozen: Vec<&str> = stage.frozen.keys().map(String::as_str).collect();
        self.space.without(&frozen)
    }

    /// Checks everything that can be checked before computing: names,
    /// layouts, budgets and the stage dependency order.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPlan(msg));
        if self.format != PLAN_FORMAT {
            return bad(format!("unsupported plan format `{}`", self.format));
        }
        self.grade.validate()?;
        self.ceraf.validate()?;
        self.anneal.validate()?;
        if !(self.weight_bound > 0.0 && self.weight_bound.is_finite()) {
            return bad(format!("weight_bound must be positive, got {}", self.weight_bound));
        }
        if !(self.validation_band > 0.0) {
            return bad(format!("validation_band must be positive, got {}", self.validation_band));
        }
        if self.workers == 0 || self.log_every == 0 || self.sensitivity_points < 2 {
            return bad("workers and log_every must be positive, sensitivity_points at least 2".into());
        }
        let names = self.space.names();
        for (key, model) in &self.models {
            model.validate()?;
            if let ModelSpec::External(ext) = model {
                validate_external(key, ext, &names)?;
            }
        }
        if let Some(s) = &self.screening {
            self.model(&s.model)?;
            if s.samples < 2 {
                return bad("screening needs at least 2 samples".into());
            }
            for name in s.frozen.keys() {
                self.space.get(name)?;
            }
        }

        // names produced so far, in stage order
        let mut produced: Vec<&str> = Vec::new();
        for (k, stage) in self.stages.iter().enumerate() {
            let ctx = |msg: String| Error::InvalidPlan(format!("stage `{}`: {msg}", stage.name));
            if self.stages[..k].iter().any(|s| s.name == stage.name) {
                return Err(ctx("duplicate stage name".into()));
            }
            self.space.get(&stage.target).map_err(|e| ctx(e.to_string()))?;
            if produced.contains(&stage.target.as_str()) {
                return Err(ctx(format!("`{}` is already identified by an earlier stage", stage.target)));
            }
            self.model(&stage.model).map_err(|e| ctx(e.to_string()))?;
            let topology = stage.topology().map_err(|e| ctx(e.to_string()))?;
            if topology.inputs() != stage.features.len() {
                return Err(ctx(format!(
                    "layout has {} inputs but {} features are listed",
                    topology.inputs(),
                    stage.features.len()
                )));
            }
            if topology.outputs() != 1 {
                return Err(ctx("layout must end in a single output neuron".into()));
            }
            if stage.train_count == 0 || stage.test_count == 0 {
                return Err(ctx("train_count and test_count must be positive".into()));
            }
            if stage.max_fitness_calls == 0 {
                return Err(ctx("max_fitness_calls must be positive".into()));
            }
            if stage.frozen.contains_key(&stage.target) {
                return Err(ctx("the target parameter cannot be frozen".into()));
            }
            for (name, f) in &stage.frozen {
                let p = self.space.get(name).map_err(|e| ctx(e.to_string()))?;
                match f.value() {
                    Some(v) if !v.is_finite() => return Err(ctx(format!("frozen `{name}` is not finite"))),
                    Some(v) if !p.contains(v) => {
                        log::warn!("stage `{}`: frozen `{name}` = {v} lies outside its bounds", stage.name)
                    }
                    Some(_) => {}
                    None if !produced.contains(&name.as_str()) => {
                        return Err(ctx(format!(
                            "`{name}` is frozen as identified but no earlier stage identifies it"
                        )))
                    }
                    None => {}
                }
            }
            if self.varied_space(stage).map(|s| s.is_empty()).unwrap_or(true) {
                return Err(ctx("every parameter is frozen; nothing to vary".into()));
            }

            let partner = match &stage.coupled_with {
                Some(p) => {
                    let pos = self.stages.iter().position(|s| &s.name == p).ok_or_else(|| {
                        ctx(format!("coupled partner `{p}` does not exist"))
                    })?;
                    if pos.abs_diff(k) != 1 {
                        return Err(ctx(format!("coupled partner `{p}` must be the adjacent stage")));
                    }
                    let other = &self.stages[pos];
                    if other.coupled_with.as_deref() != Some(stage.name.as_str()) {
                        return Err(ctx(format!("coupling with `{p}` is not mutual")));
                    }
                    if !stage.known_parameters().any(|n| n == other.target) {
                        return Err(ctx(format!(
                            "a coupled stage needs known_parameter({}) among its features",
                            other.target
                        )));
                    }
                    Some(other)
                }
                None => None,
            };
            for name in stage.known_parameters() {
                self.space.get(name).map_err(|e| ctx(e.to_string()))?;
                if name == stage.target {
                    return Err(ctx(format!("known_parameter({name}) refers to the stage's own target")));
                }
                let available = produced.contains(&name)
                    || stage.frozen.contains_key(name)
                    || partner.is_some_and(|p| p.target == name);
                if !available {
                    return Err(ctx(format!(
                        "known_parameter({name}) is neither frozen nor identified by an earlier stage"
                    )));
                }
            }
            produced.push(&stage.target);
        }
        Ok(())
    }
}

fn validate_external(key: &str, ext: &ExternalModelSpec, names: &[&str]) -> Result<()> {
    ext.validate_for(names)
        .map_err(|e| Error::InvalidPlan(format!("model `{key}`: {e}")))
}
