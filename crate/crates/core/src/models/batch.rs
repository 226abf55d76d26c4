//! Concurrent evaluation of a design and bundle persistence.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ForwardModel, ModelFailure};
use crate::doe::DesignMatrix;
use crate::io::{read_curve_csv, read_json, write_curve_csv, write_json};
use crate::stats::{CurveBundle, RowOutcome};
use crate::{Error, ParamPoint, ParameterSpace, Result};

pub const DEFAULT_WORKERS: usize = 7;

pub const BUNDLE_FORMAT: &str = "paramid.bundle.v1";

/// Simulates every design row, with `frozen` supplying the parameters the
/// design does not vary. Failed rows are masked; the batch only fails when
/// no row produced a curve.
pub fn run_batch(
    model: &dyn ForwardModel,
    design: &DesignMatrix,
    frozen: &ParamPoint,
    workers: usize,
) -> Result<CurveBundle> {
    for (name, _) in frozen.iter() {
        if design.space().index_of(name).is_some() {
            return Err(Error::InvalidConfig(format!(
                "parameter `{name}` is both frozen and varied by the design"
            )));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let outcomes: Vec<RowOutcome> = pool.install(|| {
        (0..design.n_samples())
            .into_par_iter()
            .map(|row| {
                let mut point = design.point(row);
                for (name, value) in frozen.iter() {
                    point.set(name, value);
                }
                match model.evaluate_row(row, &point) {
                    Ok(curve) => RowOutcome::Valid(curve.with_meta("row", row.to_string())),
                    Err(failure) => {
                        log::warn!("row {row}: simulation failed: {failure}");
                        RowOutcome::Failed(failure)
                    }
                }
            })
            .collect()
    });
    let bundle = CurveBundle::new(design.clone(), outcomes)?;
    if bundle.valid_count() == 0 {
        return Err(Error::EmptyBundle(design.n_samples()));
    }
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleRow {
    pub row: usize,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<ModelFailure>,
}

/// `bundle.json` in a bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFile {
    pub format: String,
    pub space: ParameterSpace,
    pub seed: u64,
    pub frozen: ParamPoint,
    /// Cache key of the inputs that produced the bundle, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub rows: Vec<BundleRow>,
}

/// Writes `design.csv`, `bundle.json` and `curves/row_NNNNN.csv` under `dir`.
pub fn save_bundle(dir: &Path, bundle: &CurveBundle, frozen: &ParamPoint, key: Option<&str>) -> Result<()> {
    bundle.design().write_csv(dir.join("design.csv"))?;
    let mut rows = Vec::with_capacity(bundle.outcomes().len());
    for (row, outcome) in bundle.outcomes().iter().enumerate() {
        rows.push(match outcome {
            RowOutcome::Valid(curve) => {
                let rel = format!("curves/row_{row:05}.csv");
                write_curve_csv(dir.join(&rel), curve)?;
                BundleRow { row, valid: true, curve: Some(rel), failure: None }
            }
            RowOutcome::Failed(f) => BundleRow { row, valid: false, curve: None, failure: Some(f.clone()) },
        });
    }
    let file = BundleFile {
        format: BUNDLE_FORMAT.to_string(),
        space: bundle.design().space().clone(),
        seed: bundle.design().seed(),
        frozen: frozen.clone(),
        key: key.map(str::to_string),
        rows,
    };
    write_json(dir.join("bundle.json"), &file)
}

/// Reads a bundle written by [`save_bundle`].
pub fn load_bundle(dir: &Path) -> Result<(CurveBundle, BundleFile)> {
    let meta_path = dir.join("bundle.json");
    let file: BundleFile = read_json(&meta_path)?;
    if file.format != BUNDLE_FORMAT {
        return Err(Error::parse(&meta_path, format!("unsupported bundle format `{}`", file.format)));
    }
    let design = DesignMatrix::read_csv(dir.join("design.csv"), &file.space, file.seed)?;
    if file.rows.len() != design.n_samples() {
        return Err(Error::Shape {
            what: "bundle rows",
            expected: design.n_samples(),
            found: file.rows.len(),
        });
    }
    let mut outcomes = Vec::with_capacity(file.rows.len());
    for (k, r) in file.rows.iter().enumerate() {
        if r.row != k {
            return Err(Error::parse(&meta_path, format!("row entry {k} is labelled {}", r.row)));
        }
        outcomes.push(match (&r.curve, &r.failure) {
            (Some(rel), _) if r.valid => {
                RowOutcome::Valid(read_curve_csv(dir.join(rel))?.with_meta("row", k.to_string()))
            }
            (_, Some(f)) if !r.valid => RowOutcome::Failed(f.clone()),
            _ => return Err(Error::parse(&meta_path, format!("row {k}: inconsistent entry"))),
        });
    }
    Ok((CurveBundle::new(design, outcomes)?, file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doe::lhs_sample;
    use crate::models::{surrogate_curve, StrainGrid, SurrogateSpec};
    use crate::{Parameter, ResponseCurve};

    fn space() -> ParameterSpace {
        ParameterSpace::new(vec![Parameter::new("f_c", 20.0, 60.0), Parameter::new("m", 2.0, 6.0)]).unwrap()
    }

    fn surrogate() -> SurrogateSpec {
        SurrogateSpec::new(StrainGrid::Uniform { start: 0.0, stop: 0.008, points: 81 }).unwrap()
    }

    fn frozen() -> ParamPoint {
        ParamPoint::from_pairs([("eps_p", 0.002)])
    }

    /// Fails on every row whose `f_c` is below a threshold.
    struct Flaky(SurrogateSpec, f64);

    impl ForwardModel for Flaky {
        fn evaluate(&self, point: &ParamPoint) -> super::super::ModelResult {
            if point.get("f_c").unwrap() < self.1 {
                return Err(ModelFailure::Parse { message: "injected".into() });
            }
            self.0.evaluate(point)
        }
        fn fingerprint(&self) -> String {
            "flaky".into()
        }
    }

    #[test]
    fn surrogate_batch_is_all_valid_and_ordered() {
        let d = lhs_sample(&space(), 40, 3).unwrap();
        let b = run_batch(&surrogate(), &d, &frozen(), 7).unwrap();
        assert_eq!(b.valid_count(), 40);
        for row in 0..40 {
            let c = b.curve(row).unwrap();
            assert_eq!(c.meta["row"], row.to_string());
            let mut p = d.point(row);
            p.set("eps_p", 0.002);
            assert_eq!(c.stress(), surrogate_curve(&surrogate(), &p).unwrap().stress());
        }
    }

    #[test]
    fn injected_failures_are_masked() {
        let d = lhs_sample(&space(), 40, 3).unwrap();
        // stratum midpoints of f_c are 20.5, 21.5, ...; six fall below 26
        let b = run_batch(&Flaky(surrogate(), 26.0), &d, &frozen(), 3).unwrap();
        assert_eq!(b.valid_mask().iter().filter(|&&v| v).count(), 34);
        let all_fail = run_batch(&Flaky(surrogate(), 1e9), &d, &frozen(), 3);
        assert!(matches!(all_fail, Err(Error::EmptyBundle(40))));
    }

    #[test]
    fn permuted_design_gives_permuted_bundle() {
        let d = lhs_sample(&space(), 12, 8).unwrap();
        let order: Vec<usize> = vec![5, 2, 11, 0, 7, 3, 9, 1, 10, 4, 8, 6];
        let shuffled = d.reordered(&order);
        let a = run_batch(&surrogate(), &d, &frozen(), 4).unwrap();
        let b = run_batch(&surrogate(), &shuffled, &frozen(), 2).unwrap();
        for (k, &orig) in order.iter().enumerate() {
            let (ca, cb): (&ResponseCurve, &ResponseCurve) = (a.curve(orig).unwrap(), b.curve(k).unwrap());
            assert_eq!(ca.stress(), cb.stress());
        }
    }

    #[test]
    fn frozen_and_varied_conflict() {
        let d = lhs_sample(&space(), 4, 1).unwrap();
        let bad = ParamPoint::from_pairs([("m", 3.0), ("eps_p", 0.002)]);
        assert!(run_batch(&surrogate(), &d, &bad, 1).is_err());
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = lhs_sample(&space(), 10, 5).unwrap();
        let b = run_batch(&Flaky(surrogate(), 30.0), &d, &frozen(), 2).unwrap();
        save_bundle(dir.path(), &b, &frozen(), Some("abc")).unwrap();
        let (back, file) = load_bundle(dir.path()).unwrap();
        assert_eq!(file.key.as_deref(), Some("abc"));
        assert_eq!(back.valid_mask(), b.valid_mask());
        assert_eq!(back.outcomes(), b.outcomes());
        assert_eq!(back.design().to_csv(), b.design().to_csv());
    }
}
