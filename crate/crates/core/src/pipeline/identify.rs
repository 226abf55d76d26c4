//! Applying trained stages to measured curves.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::coupled::{solve_coupled, CoupledConfig, CoupledMethod};
use super::plan::{IdentificationPlan, StageSpec};
use super::stage::{run_stage, StageDirs, TrainedStage};
use crate::{Error, ParamPoint, ResponseCurve, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub parameter: String,
    pub stage: String,
    pub value: f64,
    /// `(value − lower) / (upper − lower)`.
    pub unit_value: f64,
    pub in_bounds: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupled: Option<CoupledReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledReport {
    pub partner: String,
    pub residual: f64,
    pub method: CoupledMethod,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Identification {
    pub estimates: Vec<Estimate>,
}

impl Identification {
    pub fn get(&self, parameter: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.parameter == parameter)
    }

    pub fn value(&self, parameter: &str) -> Option<f64> {
        self.get(parameter).map(|e| e.value)
    }

    pub fn to_point(&self) -> ParamPoint {
        ParamPoint::from_pairs(self.estimates.iter().map(|e| (e.parameter.clone(), e.value)))
    }

    fn push(&mut self, stage: &TrainedStage, value: f64, coupled: Option<CoupledReport>) {
        let t = &stage.target;
        if !t.contains(value) {
            log::warn!("`{}` = {value} lies outside [{}, {}]", t.name, t.lower, t.upper);
        }
        self.estimates.push(Estimate {
            parameter: t.name.clone(),
            stage: stage.stage.clone(),
            value,
            unit_value: (value - t.lower) / t.width(),
            in_bounds: t.contains(value),
            coupled,
        });
    }
}

/// Measured curves keyed by the model name of the stages that use them.
pub type Measurements = BTreeMap<String, ResponseCurve>;

/// Runs the plan's stages in order on `measured`.
///
/// Stages with `"identified"` frozen parameters are trained here, on
/// simulations that use the current estimates; `dirs.out` (if any) receives
/// their artifacts under `stages/<name>`.
pub fn identify(
    plan: &IdentificationPlan,
    trained: &BTreeMap<String, TrainedStage>,
    measured: &Measurements,
    dirs: StageDirs<'_>,
) -> Result<Identification> {
    let mut result = Identification::default();
    let mut k = 0;
    while k < plan.stages.len() {
        let stage = &plan.stages[k];
        let partner = stage
            .coupled_with
            .as_deref()
            .and_then(|p| plan.stages.get(k + 1).filter(|s| s.name == p));
        match partner {
            Some(other) => {
                identify_coupled(plan, stage, other, trained, measured, dirs, &mut result)?;
                k += 2;
            }
            None => {
                let net = stage_network(plan, stage, trained, &result, dirs)?;
                let curve = measured_curve(stage, measured)?;
                let value = {
                    let known = known_values(&net, &result);
                    net.predict(curve, &known)?
                };
                result.push(&net, value, None);
                k += 1;
            }
        }
    }
    Ok(result)
}

fn measured_curve<'m>(stage: &StageSpec, measured: &'m Measurements) -> Result<&'m ResponseCurve> {
    measured.get(&stage.model).ok_or_else(|| Error::MissingFeature {
        stage: stage.name.clone(),
        feature: format!("measured curve for model `{}`", stage.model),
        reason: "no such curve was supplied".into(),
    })
}

/// Frozen values used in training first, then earlier estimates.
fn known_values<'a>(net: &'a TrainedStage, result: &'a Identification) -> impl Fn(&str) -> Option<f64> + 'a {
    move |name: &str| net.frozen.get(name).or_else(|| result.value(name))
}

fn stage_network(
    plan: &IdentificationPlan,
    stage: &StageSpec,
    trained: &BTreeMap<String, TrainedStage>,
    result: &Identification,
    dirs: StageDirs<'_>,
) -> Result<TrainedStage> {
    if !stage.is_deferred() {
        return trained.get(&stage.name).cloned().ok_or_else(|| {
            Error::InvalidConfig(format!("stage `{}` has no trained network", stage.name))
        });
    }
    let frozen = stage.resolve_frozen(&|n| result.value(n))?;
    log::info!("stage `{}`: training against current estimates", stage.name);
    let out = dirs.out.map(|d| d.join("stages").join(&stage.name));
    let run = run_stage(plan, stage, &frozen, StageDirs { cache: dirs.cache, out: out.as_deref() })?;
    Ok(run.trained)
}

fn identify_coupled(
    plan: &IdentificationPlan,
    a_spec: &StageSpec,
    b_spec: &StageSpec,
    trained: &BTreeMap<String, TrainedStage>,
    measured: &Measurements,
    dirs: StageDirs<'_>,
    result: &mut Identification,
) -> Result<()> {
    let a = stage_network(plan, a_spec, trained, result, dirs)?;
    let b = stage_network(plan, b_spec, trained, result, dirs)?;
    let (pa, pb) = (&a.target, &b.target);
    let (curve_a, curve_b) = (measured_curve(a_spec, measured)?, measured_curve(b_spec, measured)?);

    // features not involving the partner are fixed; the partner slot varies
    let placeholder = |name: &str, partner: &str| if name == partner { Some(f64::NAN) } else { None };
    let raw_a = {
        let known = |n: &str| placeholder(n, &pb.name).or_else(|| known_values(&a, result)(n));
        a.raw_features(curve_a, &known)?
    };
    let raw_b = {
        let known = |n: &str| placeholder(n, &pa.name).or_else(|| known_values(&b, result)(n));
        b.raw_features(curve_b, &known)?
    };
    let slot = |net: &TrainedStage, partner: &str| {
        net.features.iter().position(|f| f.parameter() == Some(partner)).expect("validated coupling")
    };
    let (slot_a, slot_b) = (slot(&a, &pb.name), slot(&b, &pa.name));
    let map_a = |q_unit: f64| {
        let mut x = raw_a.clone();
        x[slot_a] = pb.lower + q_unit * pb.width();
        a.predict_raw(&x).map_or(f64::NAN, |p| (p - pa.lower) / pa.width())
    };
    let map_b = |p_unit: f64| {
        let mut x = raw_b.clone();
        x[slot_b] = pa.lower + p_unit * pa.width();
        b.predict_raw(&x).map_or(f64::NAN, |q| (q - pb.lower) / pb.width())
    };
    let sol = solve_coupled(&map_a, &map_b, &CoupledConfig::default())?;
    let report = |partner: &str| CoupledReport {
        partner: partner.to_string(),
        residual: sol.residual,
        method: sol.method,
    };
    result.push(&a, pa.lower + sol.p * pa.width(), Some(report(&b_spec.name)));
    result.push(&b, pb.lower + sol.q * pb.width(), Some(report(&a_spec.name)));
    Ok(())
}

/// Reads `<stages_dir>/<name>/stage.json` for every non-deferred stage.
pub fn load_trained(plan: &IdentificationPlan, stages_dir: &Path) -> Result<BTreeMap<String, TrainedStage>> {
    let mut out = BTreeMap::new();
    for stage in plan.stages.iter().filter(|s| !s.is_deferred()) {
        let path = stages_dir.join(&stage.name).join("stage.json");
        if !path.is_file() {
            return Err(Error::InvalidConfig(format!(
                "stage `{}` has no trained network at {}",
                stage.name,
                path.display()
            )));
        }
        out.insert(stage.name.clone(), TrainedStage::load(&path)?);
    }
    Ok(out)
}
