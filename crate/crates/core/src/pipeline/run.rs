//! Whole-plan runs with a hashed manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::identify::{identify, Identification, Measurements};
use super::plan::IdentificationPlan;
use super::stage::{run_stage, simulate_cached, write_sensitivity, StageDirs, TrainedStage};
use crate::doe::{decorrelate_with_report, lhs_sample, save_design, AnnealMeta, DesignMeta};
use crate::io::{read_json, sha256_file, sha256_hex, write_json};
use crate::{Error, ErrorClass, ParamPoint, Result, TOOL_VERSION};

pub const MANIFEST_FORMAT: &str = "paramid.manifest.v1";

/// Measured curves to identify once the stages are trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub label: String,
    pub curves: Measurements,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub measurements: Vec<Measurement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    /// Stage name, or `identify/<label>` for a failed identification.
    pub stage: String,
    pub class: ErrorClass,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Trained { validation_pass: bool, max_rel_error: f64, evaluations: u64 },
    /// Trained per measurement, against earlier estimates.
    Deferred,
    Failed,
    Skipped { missing: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationStatus {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Identification>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub stages: BTreeMap<String, StageStatus>,
    pub identifications: Vec<IdentificationStatus>,
    pub failures: Vec<StageFailure>,
}

impl RunSummary {
    /// Class of the first failure, if any.
    pub fn failure_class(&self) -> Option<ErrorClass> {
        self.failures.first().map(|f| f.class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub tool_version: String,
    /// SHA-256 of the compact plan JSON.
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    /// Relative path (forward slashes) to SHA-256 of every file in the run
    /// directory except the manifest itself.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub trained: BTreeMap<String, TrainedStage>,
    pub manifest: RunManifest,
}

fn failure(stage: impl Into<String>, e: &Error) -> StageFailure {
    StageFailure {
        stage: stage.into(),
        class: e.class(),
        message: e.to_string(),
    }
}

/// Runs screening (if configured), trains every non-deferred stage, identifies
/// each measurement and writes `manifest.json`.
///
/// A failing stage does not abort the run: it is recorded in the summary and
/// stages depending on its parameter are skipped. Only plan and file-system
/// errors are returned as `Err`.
pub fn run_plan(plan: &IdentificationPlan, run_dir: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    plan.validate()?;
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    write_json(run_dir.join("plan.json"), plan)?;
    let cache = run_dir.join("cache");
    let mut summary = RunSummary::default();

    if let Some(screen) = &plan.screening {
        if let Err(e) = run_screening(plan, run_dir, &cache) {
            log::error!("screening failed: {e}");
            summary.failures.push(failure(format!("screening/{}", screen.model), &e));
        }
    }

    let mut trained = BTreeMap::new();
    let mut missing_params: BTreeSet<String> = BTreeSet::new();
    for stage in &plan.stages {
        let needs: Vec<String> = stage
            .identified()
            .chain(stage.known_parameters())
            .filter(|p| missing_params.contains(*p))
            .map(str::to_string)
            .collect();
        if !needs.is_empty() {
            log::warn!("stage `{}` skipped: depends on {}", stage.name, needs.join(", "));
            missing_params.insert(stage.target.clone());
            summary.stages.insert(stage.name.clone(), StageStatus::Skipped { missing: needs });
            continue;
        }
        if stage.is_deferred() {
            summary.stages.insert(stage.name.clone(), StageStatus::Deferred);
            continue;
        }
        let out = run_dir.join("stages").join(&stage.name);
        let result = stage
            .resolve_frozen(&|_| None)
            .and_then(|frozen| run_stage(plan, stage, &frozen, StageDirs { cache: Some(&cache), out: Some(&out) }));
        match result {
            Ok(run) => {
                let v = &run.trained.validation;
                summary.stages.insert(
                    stage.name.clone(),
                    StageStatus::Trained {
                        validation_pass: v.pass,
                        max_rel_error: v.max_rel_error,
                        evaluations: run.trained.evaluations,
                    },
                );
                trained.insert(stage.name.clone(), run.trained);
            }
            Err(e) => {
                log::error!("stage `{}` failed: {e}", stage.name);
                summary.failures.push(failure(&stage.name, &e));
                summary.stages.insert(stage.name.clone(), StageStatus::Failed);
                missing_params.insert(stage.target.clone());
            }
        }
    }

    if missing_params.is_empty() {
        for m in &opts.measurements {
            let out = run_dir.join("identify").join(&m.label);
            let dirs = StageDirs { cache: Some(&cache), out: Some(&out) };
            let result = identify(plan, &trained, &m.curves, dirs).and_then(|ident| {
                write_json(out.join("estimates.json"), &ident)?;
                Ok(ident)
            });
            match result {
                Ok(ident) => summary.identifications.push(IdentificationStatus {
                    label: m.label.clone(),
                    result: Some(ident),
                }),
                Err(e) => {
                    log::error!("identification `{}` failed: {e}", m.label);
                    summary.failures.push(failure(format!("identify/{}", m.label), &e));
                    summary.identifications.push(IdentificationStatus { label: m.label.clone(), result: None });
                }
            }
        }
    } else if !opts.measurements.is_empty() {
        log::warn!("identification skipped: stages failed");
    }

    write_json(run_dir.join("summary.json"), &summary)?;
    let manifest = build_manifest(plan, run_dir)?;
    write_json(run_dir.join("manifest.json"), &manifest)?;
    Ok(RunOutcome { summary, trained, manifest })
}

fn run_screening(plan: &IdentificationPlan, run_dir: &Path, cache: &Path) -> Result<()> {
    let screen = plan.screening.as_ref().expect("checked by caller");
    let model = plan.model(&screen.model)?;
    let frozen_names: Vec<&str> = screen.frozen.keys().map(String::as_str).collect();
    let space = plan.space.without(&frozen_names)?;
    let mut design = lhs_sample(&space, screen.samples, screen.seed)?;
    let mut anneal = None;
    if space.len() >= 2 && screen.samples >= 3 {
        let (d, report) = decorrelate_with_report(&design, &plan.anneal, screen.seed.wrapping_add(1))?;
        design = d;
        anneal = Some(AnnealMeta { config: plan.anneal, seed: screen.seed.wrapping_add(1), report });
    }
    let dir = run_dir.join("screening");
    let meta = DesignMeta { seed: screen.seed, samples: screen.samples, jitter: false, space, anneal };
    save_design(&dir.join("design.csv"), &design, &meta)?;
    let frozen = ParamPoint::from_pairs(screen.frozen.iter().map(|(k, v)| (k.clone(), *v)));
    let bundle = simulate_cached(model, &design, &frozen, plan.workers, Some(cache))?;
    write_sensitivity(&dir, &bundle, plan.sensitivity_points)
}

fn plan_seeds(plan: &IdentificationPlan) -> BTreeMap<String, u64> {
    let mut seeds = BTreeMap::new();
    if let Some(s) = &plan.screening {
        seeds.insert("screening".to_string(), s.seed);
    }
    for stage in &plan.stages {
        seeds.insert(format!("stage/{}", stage.name), stage.seed);
    }
    seeds
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path != root.join("manifest.json") {
            out.push(path);
        }
    }
    Ok(())
}

fn relative_name(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).expect("file under run dir");
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn build_manifest(plan: &IdentificationPlan, run_dir: &Path) -> Result<RunManifest> {
    let mut paths = Vec::new();
    collect_files(run_dir, run_dir, &mut paths)?;
    let mut files = BTreeMap::new();
    for p in paths {
        files.insert(relative_name(run_dir, &p), sha256_file(&p)?);
    }
    let plan_json = serde_json::to_string(plan).expect("plan serializes");
    Ok(RunManifest {
        format: MANIFEST_FORMAT.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        config_hash: sha256_hex(plan_json.as_bytes()),
        seeds: plan_seeds(plan),
        files,
    })
}

/// Re-hashes every file listed in `run_dir/manifest.json`; returns the
/// paths whose content no longer matches (missing files included).
pub fn verify_manifest(run_dir: &Path) -> Result<Vec<String>> {
    let manifest: RunManifest = read_json(run_dir.join("manifest.json"))?;
    let mut bad = Vec::new();
    for (name, hash) in &manifest.files {
        let path = run_dir.join(name);
        match sha256_file(&path) {
            Ok(h) if &h == hash => {}
            _ => bad.push(name.clone()),
        }
    }
    Ok(bad)
}
