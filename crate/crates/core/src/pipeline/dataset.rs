//! Training/test patterns assembled from a curve bundle.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::StageSpec;
use crate::ann::Pattern;
use crate::io::fmt_f64;
use crate::stats::CurveBundle;
use crate::{Error, NormalizationRule, ParamPoint, ParameterSpace, Result};

/// Offset mixed into the stage seed for the train/test shuffle, so the split
/// does not replay the design's random stream.
const SPLIT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRow {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub input_rules: Vec<NormalizationRule>,
    pub target_rule: NormalizationRule,
    pub train: Vec<Pattern>,
    pub test: Vec<Pattern>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    /// Raw (physical) feature values and target per used row, train rows first.
    pub raw_inputs: Vec<Vec<f64>>,
    pub raw_targets: Vec<f64>,
    pub excluded: Vec<ExcludedRow>,
}

impl Dataset {
    pub fn test_truth(&self) -> &[f64] {
        &self.raw_targets[self.train.len()..]
    }

    /// One line per used row: row, split, raw features, target.
    pub fn to_csv(&self, feature_names: &[String], target: &str) -> String {
        let mut out = String::from("row,split");
        for f in feature_names {
            out.push(',');
            out.push_str(f);
        }
        out.push(',');
        out.push_str(target);
        out.push('\n');
        let rows = self.train_rows.iter().map(|r| (r, "train")).chain(self.test_rows.iter().map(|r| (r, "test")));
        for (k, (row, split)) in rows.enumerate() {
            out.push_str(&format!("{row},{split}"));
            for v in &self.raw_inputs[k] {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push(',');
            out.push_str(&fmt_f64(self.raw_targets[k]));
            out.push('\n');
        }
        out
    }
}

/// Input rule from observed training values; a constant column gets a
/// widened interval so it maps to the middle of the target interval.
pub fn input_rule(values: &[f64]) -> Result<NormalizationRule> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo < hi {
        NormalizationRule::onto_default(lo, hi)
    } else {
        let half = 0.5 * lo.abs().max(1.0);
        NormalizationRule::onto_default(lo - half, lo + half)
    }
}

/// Extracts the stage features for every valid row, splits rows into
/// training and test sets by a seeded shuffle and normalizes everything.
///
/// `frozen` holds the parameters the bundle's design did not vary; together
/// with the design row they are the row's true parameter values.
pub fn build_dataset(
    bundle: &CurveBundle,
    frozen: &ParamPoint,
    stage: &StageSpec,
    space: &ParameterSpace,
) -> Result<Dataset> {
    let target = space.get(&stage.target)?;
    let target_rule = NormalizationRule::onto_default(target.lower, target.upper)?;
    let design = bundle.design();

    let mut usable = Vec::new();
    let mut excluded = Vec::new();
    for row in bundle.valid_rows() {
        let curve = bundle.curve(row).expect("valid row has a curve");
        let mut truth = design.point(row);
        for (n, v) in frozen.iter() {
            truth.set(n, v);
        }
        let known = |name: &str| truth.get(name);
        let features: Result<Vec<f64>> = stage.features.iter().map(|f| f.evaluate(curve, &known)).collect();
        match (features, truth.require(&stage.target)) {
            (Ok(x), Ok(y)) => usable.push((row, x, y)),
            (Err(e), _) | (_, Err(e)) => {
                log::warn!("stage `{}`: row {row} excluded: {e}", stage.name);
                excluded.push(ExcludedRow { row, reason: e.to_string() });
            }
        }
    }
    let needed = stage.samples();
    if usable.len() < needed {
        return Err(Error::InsufficientData(format!(
            "stage `{}` needs {needed} usable rows ({} train + {} test), bundle has {}",
            stage.name,
            stage.train_count,
            stage.test_count,
            usable.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stage.seed ^ SPLIT_STREAM);
    usable.shuffle(&mut rng);
    usable.truncate(needed);
    let (train_part, test_part) = usable.split_at(stage.train_count);

    let input_rules = (0..stage.features.len())
        .map(|j| input_rule(&train_part.iter().map(|(_, x, _)| x[j]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let pattern = |x: &[f64], y: f64| Pattern {
        input: x.iter().zip(&input_rules).map(|(v, r)| r.normalize(*v)).collect(),
        target: vec![target_rule.normalize(y)],
    };
    Ok(Dataset {
        train: train_part.iter().map(|(_, x, y)| pattern(x, *y)).collect(),
        test: test_part.iter().map(|(_, x, y)| pattern(x, *y)).collect(),
        train_rows: train_part.iter().map(|(r, _, _)| *r).collect(),
        test_rows: test_part.iter().map(|(r, _, _)| *r).collect(),
        raw_inputs: usable.iter().map(|(_, x, _)| x.clone()).collect(),
        raw_targets: usable.iter().map(|(_, _, y)| *y).collect(),
        input_rules,
        target_rule,
        excluded,
    })
}
