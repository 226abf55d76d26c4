//! One stage end to end: design, simulation (cached), dataset, training,
//! validation and persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{build_dataset, Dataset};
use super::plan::{IdentificationPlan, StageSpec};
use super::train::{train_stage, training_history_csv, TrainConfig, TrainRecord};
use super::validate::{validate_stage, ValidationReport};
use crate::ann::Network;
use crate::doe::{decorrelate_with_report, lhs_sample, save_design, AnnealMeta, AnnealReport, DesignMatrix, DesignMeta};
use crate::grade::GradeConfig;
use crate::io::{read_json, sha256_hex, write_json, write_text};
use crate::models::{load_bundle, run_batch, save_bundle, ForwardModel};
use crate::stats::{peak_sensitivity, peak_table_csv, sensitivity_evolution, CurveBundle};
use crate::{CurveFeature, Error, NormalizationRule, ParamPoint, Parameter, ParameterSpace, ResponseCurve, Result};

pub const TRAINED_STAGE_FORMAT: &str = "paramid.stage.v1";

/// Everything needed to apply a trained stage to a measured curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedStage {
    pub format: String,
    pub stage: String,
    pub target: Parameter,
    pub features: Vec<CurveFeature>,
    pub input_rules: Vec<NormalizationRule>,
    pub target_rule: NormalizationRule,
    /// Frozen values the training simulations used.
    pub frozen: ParamPoint,
    pub network: Network,
    pub evaluations: u64,
    pub validation: ValidationReport,
}

impl TrainedStage {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let stage: TrainedStage = read_json(path)?;
        if stage.format != TRAINED_STAGE_FORMAT {
            return Err(Error::parse(path, format!("unsupported stage format `{}`", stage.format)));
        }
        if stage.features.len() != stage.network.topology().inputs()
            || stage.input_rules.len() != stage.features.len()
        {
            return Err(Error::parse(path, "features, rules and network inputs disagree"));
        }
        Ok(stage)
    }

    /// Physical feature values read from `curve`.
    pub fn raw_features(&self, curve: &ResponseCurve, known: &dyn Fn(&str) -> Option<f64>) -> Result<Vec<f64>> {
        self.features
            .iter()
            .map(|f| {
                f.evaluate(curve, known).map_err(|e| Error::MissingFeature {
                    stage: self.stage.clone(),
                    feature: f.to_string(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    /// Physical prediction from physical feature values (not clamped).
    pub fn predict_raw(&self, raw: &[f64]) -> Result<f64> {
        let input: Vec<f64> = raw.iter().zip(&self.input_rules).map(|(v, r)| r.normalize(*v)).collect();
        Ok(self.target_rule.denormalize(self.network.propagate(&input)?[0]))
    }

    pub fn predict(&self, curve: &ResponseCurve, known: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        self.predict_raw(&self.raw_features(curve, known)?)
    }
}

#[derive(Debug, Clone)]
pub struct StageRun {
    pub design: DesignMatrix,
    pub anneal: Option<AnnealReport>,
    pub bundle: CurveBundle,
    pub dataset: Dataset,
    pub trained: TrainedStage,
    pub history: Vec<TrainRecord>,
}

/// Where a stage reads and writes files. Both are optional; without them
/// everything stays in memory.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageDirs<'a> {
    /// Bundle cache shared by all stages of a run.
    pub cache: Option<&'a Path>,
    /// Stage artifact directory.
    pub out: Option<&'a Path>,
}

/// Cache key of a simulation batch.
pub fn bundle_key(model: &dyn ForwardModel, design: &DesignMatrix, frozen: &ParamPoint) -> String {
    let mut text = model.fingerprint();
    text.push('\n');
    text.push_str(&design.to_csv());
    text.push('\n');
    text.push_str(&serde_json::to_string(frozen).expect("point serializes"));
    sha256_hex(text.as_bytes())
}

/// [`run_batch`] with an on-disk cache keyed by [`bundle_key`].
pub fn simulate_cached(
    model: &dyn ForwardModel,
    design: &DesignMatrix,
    frozen: &ParamPoint,
    workers: usize,
    cache: Option<&Path>,
) -> Result<CurveBundle> {
    let key = bundle_key(model, design, frozen);
    let Some(cache) = cache else {
        return run_batch(model, design, frozen, workers);
    };
    let dir = cache.join(&key[..16]);
    if dir.join("bundle.json").is_file() {
        if let Ok((bundle, file)) = load_bundle(&dir) {
            if file.key.as_deref() == Some(key.as_str()) {
                log::info!("reusing cached bundle {}", dir.display());
                return Ok(bundle);
            }
        }
    }
    let bundle = run_batch(model, design, frozen, workers)?;
    save_bundle(&dir, &bundle, frozen, Some(&key))?;
    Ok(bundle)
}

/// Uniform grid over the strain range every valid curve covers.
pub fn common_grid(bundle: &CurveBundle, points: usize) -> Option<Vec<f64>> {
    let (lo, hi) = bundle.common_range()?;
    if !(lo < hi) || points < 2 {
        return None;
    }
    let last = (points - 1) as f64;
    Some((0..points).map(|k| lo + (hi - lo) * k as f64 / last).collect())
}

/// Writes `sensitivity.csv` and `peaks.csv`; failures are logged, not fatal.
pub fn write_sensitivity(dir: &Path, bundle: &CurveBundle, points: usize) -> Result<()> {
    match common_grid(bundle, points).map(|g| sensitivity_evolution(bundle, &g)) {
        Some(Ok(trace)) => trace.write_csv(dir.join("sensitivity.csv"))?,
        Some(Err(e)) => log::warn!("{}: sensitivity skipped: {e}", dir.display()),
        None => log::warn!("{}: sensitivity skipped: curves share no strain range", dir.display()),
    }
    match peak_sensitivity(bundle) {
        Ok(rows) => write_text(dir.join("peaks.csv"), &peak_table_csv(&rows))?,
        Err(e) => log::warn!("{}: peak sensitivity skipped: {e}", dir.display()),
    }
    Ok(())
}

/// LHS design over the stage's varied parameters, decorrelated on request.
pub fn stage_design(plan: &IdentificationPlan, stage: &StageSpec) -> Result<(DesignMatrix, Option<AnnealReport>)> {
    let space = plan.varied_space(stage)?;
    let design = lhs_sample(&space, stage.samples(), stage.seed)?;
    if stage.anneal && space.len() >= 2 && stage.samples() >= 3 {
        let (design, report) = decorrelate_with_report(&design, &plan.anneal, stage.seed.wrapping_add(1))?;
        Ok((design, Some(report)))
    } else {
        Ok((design, None))
    }
}

/// Per-stage training settings: the stage budget and a seed derived from the
/// stage seed on top of `base`.
pub fn train_config(base: &TrainConfig, stage: &StageSpec) -> TrainConfig {
    TrainConfig {
        grade: GradeConfig {
            max_fitness_calls: stage.max_fitness_calls,
            seed: stage.seed.wrapping_add(2),
            ..base.grade.clone()
        },
        ..base.clone()
    }
}

/// Dataset, trained network and validation report for one stage.
#[derive(Debug, Clone)]
pub struct FittedStage {
    pub dataset: Dataset,
    pub trained: TrainedStage,
    pub history: Vec<TrainRecord>,
}

/// Trains and validates `stage` on an already simulated bundle.
///
/// `space` supplies the target bounds; `cfg` is used as given (see
/// [`train_config`]).
pub fn fit_stage(
    stage: &StageSpec,
    bundle: &CurveBundle,
    frozen: &ParamPoint,
    space: &ParameterSpace,
    cfg: &TrainConfig,
    band: f64,
) -> Result<FittedStage> {
    let dataset = build_dataset(bundle, frozen, stage, space)?;
    let topology = stage.topology()?;
    let net = train_stage(&dataset, &topology, stage.activation, cfg)?;
    let target = space.get(&stage.target)?.clone();
    let validation = validate_stage(&net.network, &dataset.test, dataset.test_truth(), &dataset.target_rule, &target, band)?;
    log::info!(
        "stage `{}`: max relative error {:.4} ({})",
        stage.name,
        validation.max_rel_error,
        if validation.pass { "pass" } else { "outside band" }
    );
    let trained = TrainedStage {
        format: TRAINED_STAGE_FORMAT.to_string(),
        stage: stage.name.clone(),
        target,
        features: stage.features.clone(),
        input_rules: dataset.input_rules.clone(),
        target_rule: dataset.target_rule,
        frozen: frozen.clone(),
        network: net.network,
        evaluations: net.evaluations,
        validation,
    };
    Ok(FittedStage { dataset, trained, history: net.history })
}

/// Runs one stage with `frozen` supplying every frozen parameter value.
pub fn run_stage(
    plan: &IdentificationPlan,
    stage: &StageSpec,
    frozen: &ParamPoint,
    dirs: StageDirs<'_>,
) -> Result<StageRun> {
    let model = plan.model(&stage.model)?;
    let (design, anneal) = stage_design(plan, stage)?;
    let bundle = simulate_cached(model, &design, frozen, plan.workers, dirs.cache)?;
    let cfg = train_config(&plan.train_defaults(), stage);
    let fitted = fit_stage(stage, &bundle, frozen, &plan.space, &cfg, plan.validation_band)?;
    let run = StageRun {
        design,
        anneal,
        bundle,
        dataset: fitted.dataset,
        trained: fitted.trained,
        history: fitted.history,
    };
    if let Some(out) = dirs.out {
        persist_stage(plan, stage, &run, out, dirs.cache.is_none())?;
    }
    Ok(run)
}

fn persist_stage(plan: &IdentificationPlan, stage: &StageSpec, run: &StageRun, out: &Path, with_bundle: bool) -> Result<()> {
    let meta = DesignMeta {
        seed: stage.seed,
        samples: stage.samples(),
        jitter: false,
        space: run.design.space().clone(),
        anneal: run.anneal.map(|report| AnnealMeta {
            config: plan.anneal,
            seed: stage.seed.wrapping_add(1),
            report,
        }),
    };
    save_design(&out.join("design.csv"), &run.design, &meta)?;
    if with_bundle {
        save_bundle(&out.join("bundle"), &run.bundle, &run.trained.frozen, None)?;
    }
    write_fitted(out, stage, &run.dataset, &run.trained, &run.history)?;
    write_sensitivity(out, &run.bundle, plan.sensitivity_points)
}

/// Writes `dataset.csv`, `stage.json`, `network.json`, `history.csv` and
/// `validation.json` under `out`.
pub fn write_fitted(
    out: &Path,
    stage: &StageSpec,
    dataset: &Dataset,
    trained: &TrainedStage,
    history: &[TrainRecord],
) -> Result<()> {
    let names: Vec<String> = stage.features.iter().map(|f| f.to_string()).collect();
    write_text(out.join("dataset.csv"), &dataset.to_csv(&names, &stage.target))?;
    trained.save(out.join("stage.json"))?;
    trained.network.save(out.join("network.json"))?;
    write_text(out.join("history.csv"), &training_history_csv(history))?;
    write_json(out.join("validation.json"), &trained.validation)
}
