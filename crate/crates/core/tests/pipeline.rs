//! Identification and run orchestration on small plans and hand-built networks.

use std::collections::BTreeMap;
use std::fs;

use paramid::ann::{Network, Topology};
use paramid::models::{surrogate_curve, StrainGrid, SurrogateSpec};
use paramid::pipeline::{
    identify, run_plan, verify_manifest, IdentificationPlan, Measurement, Measurements, RunOptions, StageDirs,
    StageStatus, TrainedStage, ValidationReport, TRAINED_STAGE_FORMAT,
};
use paramid::{CurveFeature, Error, ErrorClass, NormalizationRule, ParamPoint, Parameter, ResponseCurve};

const SPACE: &str = r#"{"params": [
    {"name": "f_c", "lower": 20.0, "upper": 60.0},
    {"name": "eps_p", "lower": 0.001, "upper": 0.004},
    {"name": "m", "lower": 2.0, "upper": 6.0}]}"#;

const POPOVICS: &str = r#"{"type": "popovics", "strain_grid": {"start": 0.0, "stop": 0.016, "points": 161}}"#;

fn plan(extra_models: &str, rest: &str) -> IdentificationPlan {
    let text = format!(
        r#"{{"format": "paramid.plan.v1", "space": {SPACE},
            "models": {{"popovics": {POPOVICS}{extra_models}}}, {rest}}}"#
    );
    IdentificationPlan::from_json_str(&text).unwrap()
}

fn strength_plan() -> IdentificationPlan {
    plan(
        "",
        r#""stages": [{"name": "strength", "target": "f_c", "model": "popovics", "layout": [1, 1],
            "features": [{"kind": "peak_stress"}], "train_count": 4, "test_count": 2, "seed": 0}]"#,
    )
}

fn measured(f_c: f64, eps_p: f64, m: f64) -> ResponseCurve {
    let spec = SurrogateSpec::new(StrainGrid::Explicit((0..=160).map(|k| k as f64 * 1e-4).collect())).unwrap();
    surrogate_curve(&spec, &ParamPoint::from_pairs([("f_c", f_c), ("eps_p", eps_p), ("m", m)])).unwrap()
}

fn curves(curve: ResponseCurve) -> Measurements {
    BTreeMap::from([("popovics".to_string(), curve)])
}

/// 1-1 network reading peak stress over [10, 70] with weights (bias, input).
fn hand_stage(bias: f64, w: f64) -> TrainedStage {
    let target = Parameter::new("f_c", 20.0, 60.0);
    let network = Network::from_vector(Topology::new(vec![1, 1]).unwrap(), vec![bias, w]).unwrap();
    TrainedStage {
        format: TRAINED_STAGE_FORMAT.to_string(),
        stage: "strength".into(),
        target: target.clone(),
        features: vec![CurveFeature::PeakStress],
        input_rules: vec![NormalizationRule::onto_default(10.0, 70.0).unwrap()],
        target_rule: NormalizationRule::onto_default(20.0, 60.0).unwrap(),
        frozen: ParamPoint::new(),
        network,
        evaluations: 0,
        validation: ValidationReport::from_predictions(&target, &[30.0, 50.0], &[30.0, 50.0], 0.05).unwrap(),
    }
}

fn trained(stage: TrainedStage) -> BTreeMap<String, TrainedStage> {
    BTreeMap::from([(stage.stage.clone(), stage)])
}

#[test]
fn estimate_decodes_the_network_output() {
    let (bias, w) = (-1.2, 3.0);
    let stage = hand_stage(bias, w);
    // peak stress of the measured curve is f_c since eps_p lies on the grid
    let x = 0.15 + 0.7 * (37.0 - 10.0) / 60.0;
    let out = 1.0 / (1.0 + (-0.5 * (bias + w * x)).exp());
    let expected = 20.0 + (out - 0.15) / 0.7 * 40.0;

    let ident = identify(&strength_plan(), &trained(stage), &curves(measured(37.0, 0.002, 3.0)), StageDirs::default())
        .unwrap();
    let e = ident.get("f_c").unwrap();
    assert!((e.value - expected).abs() < 1e-10, "{} vs {expected}", e.value);
    assert!((20.0 + e.unit_value * 40.0 - e.value).abs() < 1e-10);
    assert!(e.in_bounds);
    assert_eq!(e.stage, "strength");
    assert!(e.coupled.is_none());
}

#[test]
fn out_of_range_output_is_flagged_not_clamped() {
    // sigmoid(0.5 · 6) ≈ 0.953, above the 0.85 end of the target interval
    let stage = hand_stage(6.0, 0.0);
    let ident = identify(&strength_plan(), &trained(stage), &curves(measured(37.0, 0.002, 3.0)), StageDirs::default())
        .unwrap();
    let e = ident.get("f_c").unwrap();
    let out = 1.0 / (1.0 + (-3.0f64).exp());
    assert!((e.value - (20.0 + (out - 0.15) / 0.7 * 40.0)).abs() < 1e-10);
    assert!(e.value > 60.0);
    assert!(e.unit_value > 1.0);
    assert!(!e.in_bounds);
}

#[test]
fn missing_curve_or_known_value_is_a_missing_feature() {
    let stage = hand_stage(0.0, 1.0);
    let err = identify(&strength_plan(), &trained(stage.clone()), &Measurements::new(), StageDirs::default()).unwrap_err();
    assert!(matches!(err, Error::MissingFeature { .. }), "{err}");
    assert_eq!(err.class(), ErrorClass::Data);

    // the stage reads m, which nothing estimates or freezes
    let mut needs_m = stage;
    needs_m.features = vec![CurveFeature::known("m")];
    let err = identify(&strength_plan(), &trained(needs_m), &curves(measured(37.0, 0.002, 3.0)), StageDirs::default())
        .unwrap_err();
    assert!(matches!(err, Error::MissingFeature { .. }), "{err}");
}

#[test]
fn screening_only_plan_writes_designs_and_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let p = plan("", r#""screening": {"model": "popovics", "samples": 12, "seed": 4}, "stages": []"#);
    let outcome = run_plan(&p, dir.path(), &RunOptions::default()).unwrap();
    assert!(outcome.summary.failures.is_empty());
    assert!(outcome.trained.is_empty());
    for f in ["plan.json", "summary.json", "manifest.json", "screening/design.csv", "screening/sensitivity.csv", "screening/peaks.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert!(!dir.path().join("stages").exists());
    assert_eq!(fs::read_dir(dir.path().join("cache")).unwrap().count(), 1);
    let design = fs::read_to_string(dir.path().join("screening/design.csv")).unwrap();
    assert_eq!(design.lines().count(), 13);
    assert_eq!(outcome.manifest.seeds.get("screening"), Some(&4));
}

#[test]
fn failing_stage_skips_only_its_dependents() {
    let dir = tempfile::tempdir().unwrap();
    let p = plan(
        r#", "broken": {"type": "external", "command": "false", "args": []}"#,
        r#""stages": [
            {"name": "peak", "target": "eps_p", "model": "broken", "layout": [1, 1],
             "features": [{"kind": "peak_strain"}], "train_count": 4, "test_count": 2, "seed": 1},
            {"name": "strength", "target": "f_c", "model": "popovics", "layout": [1, 1],
             "features": [{"kind": "peak_stress"}], "train_count": 8, "test_count": 3, "seed": 2,
             "max_fitness_calls": 2000},
            {"name": "shape", "target": "m", "model": "popovics", "layout": [2, 1],
             "features": [{"kind": "yield_strain"}, {"kind": "known_parameter", "name": "eps_p"}],
             "train_count": 4, "test_count": 2, "seed": 3}
        ]"#,
    );
    let opts = RunOptions {
        measurements: vec![Measurement { label: "probe".into(), curves: curves(measured(37.0, 0.002, 3.0)) }],
    };
    let outcome = run_plan(&p, dir.path(), &opts).unwrap();
    let s = &outcome.summary;
    assert_eq!(s.stages["peak"], StageStatus::Failed);
    assert!(matches!(s.stages["strength"], StageStatus::Trained { .. }));
    assert_eq!(s.stages["shape"], StageStatus::Skipped { missing: vec!["eps_p".into()] });
    assert_eq!(s.failures.len(), 1);
    assert_eq!(s.failures[0].stage, "peak");
    assert_eq!(s.failure_class(), Some(ErrorClass::Data));
    // no identification with a stage missing
    assert!(s.identifications.is_empty());
    assert!(dir.path().join("stages/strength/network.json").is_file());
    assert!(dir.path().join("manifest.json").is_file());
}

#[test]
fn manifest_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let p = plan("", r#""screening": {"model": "popovics", "samples": 6, "seed": 9}, "stages": []"#);
    run_plan(&p, dir.path(), &RunOptions::default()).unwrap();
    assert!(verify_manifest(dir.path()).unwrap().is_empty());

    let design = dir.path().join("screening/design.csv");
    let mut text = fs::read_to_string(&design).unwrap();
    text.push('\n');
    fs::write(&design, text).unwrap();
    fs::remove_file(dir.path().join("screening/peaks.csv")).unwrap();
    let mut stale = verify_manifest(dir.path()).unwrap();
    stale.sort();
    assert_eq!(stale, vec!["screening/design.csv".to_string(), "screening/peaks.csv".to_string()]);
}
