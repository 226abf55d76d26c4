//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use paramid::doe::{
    correlation_matrix, decorrelate_with_report, lhs_sample_with, load_design, save_design, AnnealConfig, AnnealMeta,
    CorrelationObjective, DesignMatrix, DesignMeta,
};
use paramid::io::{read_config_json, read_curve_csv, write_json};
use paramid::models::{load_bundle, run_batch, save_bundle, ModelSpec, DEFAULT_WORKERS};
use paramid::pipeline::{
    bundle_key, common_grid, fit_stage, identify as identify_plan, load_trained, run_plan, train_config,
    verify_manifest, write_fitted, IdentificationPlan, Measurement, Measurements, RunOptions, StageDirs, StageSpec,
    StageStatus, TrainConfig,
};
use paramid::stats::{peak_sensitivity, peak_table_csv, sensitivity_evolution};
use paramid::{Error, ErrorClass, ParamPoint, ParameterSpace};

use crate::Global;

/// A failed command: its class picks the exit code.
#[derive(Debug)]
pub struct Failure {
    pub class: ErrorClass,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { class: e.class(), message: e.to_string() }
    }
}

fn config(message: impl Into<String>) -> Failure {
    Failure { class: ErrorClass::Config, message: message.into() }
}

type CmdResult = Result<(), Failure>;

fn worker_count(global: &Global, fallback: usize) -> Result<usize, Failure> {
    match global.workers {
        Some(0) => Err(config("--workers must be at least 1")),
        Some(n) => Ok(n),
        None => Ok(fallback),
    }
}

fn max_offdiag(design: &DesignMatrix) -> Option<f64> {
    if design.n_samples() < 2 || design.n_params() < 2 {
        return None;
    }
    correlation_matrix(design)
        .ok()
        .map(|c| CorrelationObjective::MaxAbsOffdiag.evaluate(&c))
}

#[derive(Args)]
pub struct SampleArgs {
    /// Parameter space JSON (`{"params": [{"name", "lower", "upper"}, ...]}`).
    #[arg(long)]
    space: PathBuf,
    /// Number of samples.
    #[arg(long)]
    n: usize,
    /// Seed for stratum permutations; annealing uses seed + 1.
    #[arg(long)]
    seed: u64,
    /// Output design CSV (a `.meta.json` sidecar is written next to it).
    #[arg(long)]
    out: PathBuf,
    /// Random position inside each stratum instead of its midpoint.
    #[arg(long)]
    jitter: bool,
    /// Skip the correlation-reducing annealing.
    #[arg(long)]
    no_anneal: bool,
    #[arg(long, default_value_t = AnnealConfig::default().initial_temperature)]
    temperature: f64,
    #[arg(long, default_value_t = AnnealConfig::default().cooling_factor)]
    cooling: f64,
    #[arg(long, default_value_t = AnnealConfig::default().sweeps)]
    sweeps: usize,
}

pub fn sample(a: SampleArgs) -> CmdResult {
    let space = ParameterSpace::from_json_file(&a.space)?;
    let design = lhs_sample_with(&space, a.n, a.seed, a.jitter)?;
    let before = max_offdiag(&design);
    let cfg = AnnealConfig {
        initial_temperature: a.temperature,
        cooling_factor: a.cooling,
        sweeps: a.sweeps,
        ..AnnealConfig::default()
    };
    let (design, anneal) = if a.no_anneal || before.is_none() {
        (design, None)
    } else {
        let seed = a.seed.wrapping_add(1);
        let (d, report) = decorrelate_with_report(&design, &cfg, seed)?;
        (d, Some(AnnealMeta { config: cfg, seed, report }))
    };
    let meta = DesignMeta { seed: a.seed, samples: a.n, jitter: a.jitter, space, anneal };
    save_design(&a.out, &design, &meta)?;
    match (before, max_offdiag(&design)) {
        (Some(b), Some(after)) => println!("max |off-diagonal correlation|: before {b:.4}, after {after:.4}"),
        _ => println!("max |off-diagonal correlation|: undefined for this shape"),
    }
    println!("wrote {} ({} x {})", a.out.display(), design.n_samples(), design.n_params());
    Ok(())
}

fn parse_assignment(text: &str) -> Result<(String, f64), Failure> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| config(format!("expected NAME=VALUE, got `{text}`")))?;
    let value = value
        .trim()
        .parse::<f64>()
        .map_err(|e| config(format!("`{text}`: {e}")))?;
    Ok((name.trim().to_string(), value))
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Design CSV written by `sample`.
    #[arg(long)]
    design: PathBuf,
    /// Model JSON (`{"type": "popovics", ...}` or `{"type": "external", ...}`).
    #[arg(long)]
    model: PathBuf,
    /// Output bundle directory.
    #[arg(long)]
    out: PathBuf,
    /// Value for a parameter the design does not vary (repeatable).
    #[arg(long = "set", value_name = "NAME=VALUE")]
    frozen: Vec<String>,
}

pub fn simulate(a: SimulateArgs, global: &Global) -> CmdResult {
    let (design, _) = load_design(&a.design)?;
    let model = ModelSpec::from_json_file(&a.model)?;
    let mut frozen = ParamPoint::new();
    for s in &a.frozen {
        let (name, value) = parse_assignment(s)?;
        frozen.set(name, value);
    }
    if let ModelSpec::External(ext) = &model {
        let mut names: Vec<&str> = design.space().names();
        names.extend(frozen.iter().map(|(n, _)| n));
        ext.validate_for(&names)?;
    }
    let key = bundle_key(&model, &design, &frozen);
    let bundle = run_batch(&model, &design, &frozen, worker_count(global, DEFAULT_WORKERS)?)?;
    save_bundle(&a.out, &bundle, &frozen, Some(&key))?;
    println!(
        "simulated {} rows, {} valid; bundle at {}",
        design.n_samples(),
        bundle.valid_count(),
        a.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct SensitivityArgs {
    /// Bundle directory written by `simulate`.
    #[arg(long)]
    bundle: PathBuf,
    /// Output directory for `sensitivity.csv` and `peaks.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Points of the uniform grid over the strain range all curves share.
    #[arg(long, default_value_t = 50, conflicts_with = "grid")]
    points: usize,
    /// Explicit uniform grid.
    #[arg(long, value_name = "START:STOP:POINTS")]
    grid: Option<String>,
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || config(format!("grid must be START:STOP:POINTS, got `{text}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].parse().map_err(|_| bad())?;
    let points: usize = parts[2].parse().map_err(|_| bad())?;
    if points < 2 || !(start < stop) {
        return Err(bad());
    }
    Ok((0..points)
        .map(|k| start + (stop - start) * k as f64 / (points - 1) as f64)
        .collect())
}

pub fn sensitivity(a: SensitivityArgs) -> CmdResult {
    let (bundle, _) = load_bundle(&a.bundle)?;
    if bundle.valid_count() < 2 {
        return Err(Error::InsufficientData(format!(
            "sensitivity needs at least 2 valid curves, bundle has {}",
            bundle.valid_count()
        ))
        .into());
    }
    let grid = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => common_grid(&bundle, a.points)
            .ok_or_else(|| Error::InsufficientData("the valid curves share no strain range".into()))?,
    };
    let trace = sensitivity_evolution(&bundle, &grid)?;
    let peaks = peak_sensitivity(&bundle)?;
    trace.write_csv(a.out.join("sensitivity.csv"))?;
    paramid::io::write_text(a.out.join("peaks.csv"), &peak_table_csv(&peaks))?;
    println!("parameter      r(peak strain)  r(peak stress)");
    for p in &peaks {
        println!("{:<14} {:>14.4}  {:>14.4}", p.parameter, p.r_peak_strain, p.r_peak_stress);
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    /// Bundle directory written by `simulate`.
    #[arg(long)]
    bundle: PathBuf,
    /// Stage JSON file.
    #[arg(long, required_unless_present = "plan", conflicts_with = "plan")]
    stage: Option<PathBuf>,
    /// Plan JSON to take the stage (and training settings) from.
    #[arg(long, requires = "stage_name")]
    plan: Option<PathBuf>,
    /// Stage name within `--plan`.
    #[arg(long)]
    stage_name: Option<String>,
    /// Seeds the train/test split and the optimizer (replaces the stage seed).
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Objective-call budget (replaces the stage budget).
    #[arg(long)]
    max_calls: Option<u64>,
    /// Validation band as a fraction of the target interval.
    #[arg(long)]
    band: Option<f64>,
}

pub fn train(a: TrainArgs, global: &Global) -> CmdResult {
    let (bundle, file) = load_bundle(&a.bundle)?;
    let (mut stage, base, mut band, plan_space) = match (&a.stage, &a.plan) {
        (Some(path), _) => {
            let stage: StageSpec = read_config_json(path)?;
            (stage, TrainConfig::default(), paramid::pipeline::DEFAULT_VALIDATION_BAND, None)
        }
        (None, Some(path)) => {
            let plan = IdentificationPlan::from_json_file(path)?;
            let name = a.stage_name.as_deref().expect("clap requires --stage-name");
            let stage = plan.stage(name)?.clone();
            (stage, plan.train_defaults(), plan.validation_band, Some(plan.space))
        }
        (None, None) => return Err(config("either --stage or --plan is required")),
    };
    stage.seed = a.seed;
    if let Some(calls) = a.max_calls {
        stage.max_fitness_calls = calls;
    }
    if let Some(b) = a.band {
        band = b;
    }
    let space = plan_space.unwrap_or(file.space);
    let n = worker_count(global, DEFAULT_WORKERS)?;
    let mut cfg = train_config(&base, &stage);
    cfg.grade.parallel = n > 1;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| config(format!("worker pool: {e}")))?;
    let fitted = pool.install(|| fit_stage(&stage, &bundle, &file.frozen, &space, &cfg, band))?;
    write_fitted(&a.out, &stage, &fitted.dataset, &fitted.trained, &fitted.history)?;
    let v = &fitted.trained.validation;
    println!(
        "stage `{}` ({}): train error {:.3e}, test max relative error {:.2}% (mean {:.2}%), {}",
        stage.name,
        stage.target,
        fitted.history.last().map_or(f64::NAN, |r| r.train_error),
        100.0 * v.max_rel_error,
        100.0 * v.mean_rel_error,
        if v.pass { "within band" } else { "OUTSIDE BAND" }
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

/// `[MODEL=]PATH` curve arguments resolved against the plan's stage models.
fn measured_curves(plan: &IdentificationPlan, specs: &[String]) -> Result<Measurements, Failure> {
    let used: Vec<&str> = {
        let mut v: Vec<&str> = plan.stages.iter().map(|s| s.model.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut out = BTreeMap::new();
    for spec in specs {
        let (model, path) = match spec.split_once('=') {
            Some((m, p)) if plan.models.contains_key(m) => (Some(m), p),
            _ => (None, spec.as_str()),
        };
        let curve = read_curve_csv(path)?;
        match model {
            Some(m) => {
                out.insert(m.to_string(), curve);
            }
            None if used.len() == 1 => {
                out.insert(used[0].to_string(), curve);
            }
            None => {
                return Err(config(format!(
                    "plan stages use models {}; name one as MODEL=PATH",
                    used.join(", ")
                )))
            }
        }
    }
    Ok(out)
}

fn plan_with_workers(path: &Path, global: &Global) -> Result<IdentificationPlan, Failure> {
    let mut plan = IdentificationPlan::from_json_file(path)?;
    plan.workers = worker_count(global, plan.workers)?;
    Ok(plan)
}

#[derive(Args)]
pub struct IdentifyArgs {
    /// Plan JSON.
    #[arg(long)]
    plan: PathBuf,
    /// Directory holding `<stage>/stage.json` for every trained stage.
    #[arg(long)]
    trained: PathBuf,
    /// Measured curve CSV, optionally prefixed by the model it stands for.
    #[arg(long = "curve", value_name = "[MODEL=]PATH", required = true)]
    curves: Vec<String>,
    /// Output estimates JSON.
    #[arg(long)]
    out: PathBuf,
    /// Where stages trained during identification keep their artifacts and
    /// simulation cache.
    #[arg(long)]
    work_dir: Option<PathBuf>,
}

pub fn identify(a: IdentifyArgs, global: &Global) -> CmdResult {
    let plan = plan_with_workers(&a.plan, global)?;
    let trained = load_trained(&plan, &a.trained)?;
    let measured = measured_curves(&plan, &a.curves)?;
    let cache = a.work_dir.as_ref().map(|d| d.join("cache"));
    let dirs = StageDirs { cache: cache.as_deref(), out: a.work_dir.as_deref() };
    let result = identify_plan(&plan, &trained, &measured, dirs)?;
    write_json(&a.out, &result)?;
    for e in &result.estimates {
        println!(
            "{:<10} = {:<24} {}",
            e.parameter,
            e.value,
            if e.in_bounds { "" } else { "(outside bounds)" }
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Args)]
pub struct RunArgs {
    /// Plan JSON.
    #[arg(long)]
    plan: PathBuf,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// Measured curve to identify (repeatable).
    #[arg(long = "measurement", value_name = "LABEL[:MODEL]=PATH")]
    measurements: Vec<String>,
}

fn parse_measurements(plan: &IdentificationPlan, specs: &[String]) -> Result<Vec<Measurement>, Failure> {
    let mut grouped: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for spec in specs {
        let (head, path) = spec
            .split_once('=')
            .ok_or_else(|| config(format!("expected LABEL[:MODEL]=PATH, got `{spec}`")))?;
        let entry = match head.split_once(':') {
            Some((label, model)) => (label, format!("{model}={path}")),
            None => (head, path.to_string()),
        };
        grouped.entry(entry.0.to_string()).or_default().push(entry.1);
    }
    grouped
        .into_iter()
        .map(|(label, curves)| Ok(Measurement { label, curves: measured_curves(plan, &curves)? }))
        .collect()
}

pub fn run(a: RunArgs, global: &Global) -> CmdResult {
    let plan = plan_with_workers(&a.plan, global)?;
    let measurements = parse_measurements(&plan, &a.measurements)?;
    let outcome = run_plan(&plan, &a.out, &RunOptions { measurements })?;
    for (name, status) in &outcome.summary.stages {
        let text = match status {
            StageStatus::Trained { validation_pass, max_rel_error, .. } => format!(
                "trained, max relative error {:.2}% ({})",
                100.0 * max_rel_error,
                if *validation_pass { "within band" } else { "OUTSIDE BAND" }
            ),
            StageStatus::Deferred => "trained per measurement".into(),
            StageStatus::Failed => "FAILED".into(),
            StageStatus::Skipped { missing } => format!("skipped, missing {}", missing.join(", ")),
        };
        println!("stage {name:<12} {text}");
    }
    for m in &outcome.summary.identifications {
        if let Some(r) = &m.result {
            let values: Vec<String> = r.estimates.iter().map(|e| format!("{}={}", e.parameter, e.value)).collect();
            println!("{}: {}", m.label, values.join(", "));
        }
    }
    let stale = verify_manifest(&a.out)?;
    if !stale.is_empty() {
        return Err(Failure {
            class: ErrorClass::Data,
            message: format!("manifest does not verify: {}", stale.join(", ")),
        });
    }
    println!("manifest: {} files", outcome.manifest.files.len());
    if let Some(first) = outcome.summary.failures.first() {
        return Err(Failure {
            class: first.class,
            message: format!(
                "{} failure(s); first in `{}`: {}",
                outcome.summary.failures.len(),
                first.stage,
                first.message
            ),
        });
    }
    Ok(())
}
