//! Latin Hypercube designs and annealing-based decorrelation.
//!
//! Each column of an `n`-sample design holds exactly one value in each of the
//! `n` equiprobable strata of its parameter interval. By default the value sits
//! at the stratum midpoint; `jitter` draws it uniformly inside the stratum.
//!
//! [`decorrelate`] only swaps values within a column, so the stratification
//! survives; it lowers spurious correlation between columns by simulated
//! annealing with the Metropolis acceptance rule and geometric cooling.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{fmt_f64, read_config_json, write_json, write_text};
use crate::stats::pearson;
use crate::{Error, ParamPoint, ParameterSpace, Result};

/// `n × d` sample matrix over a parameter space (row = sample).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    space: ParameterSpace,
    n: usize,
    values: Vec<f64>,
    seed: u64,
}

impl DesignMatrix {
    /// Builds a design from explicit rows; every entry must lie within bounds.
    pub fn from_rows(space: ParameterSpace, rows: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let d = space.len();
        let n = rows.len();
        let mut values = Vec::with_capacity(n * d);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(Error::Shape {
                    what: "design row",
                    expected: d,
                    found: row.len(),
                });
            }
            for (p, v) in space.iter().zip(&row) {
                if !p.contains(*v) {
                    return Err(Error::InvalidConfig(format!(
                        "design row {i}: {} = {v} outside <{}, {}>",
                        p.name, p.lower, p.upper
                    )));
                }
            }
            values.extend(row);
        }
        Ok(DesignMatrix {
            space,
            n,
            values,
            seed,
        })
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_params(&self) -> usize {
        self.space.len()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_params() + col]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_params();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i, j)).collect()
    }

    pub fn point(&self, i: usize) -> ParamPoint {
        ParamPoint::from_pairs(
            self.space
                .iter()
                .zip(self.row(i))
                .map(|(p, v)| (p.name.clone(), *v)),
        )
    }

    /// Stratum index of every entry of column `j` (0-based).
    fn strata(&self, j: usize) -> Vec<usize> {
        let p = &self.space.params()[j];
        let n = self.n as f64;
        self.column(j)
            .into_iter()
            .map(|v| (((v - p.lower) / p.width() * n).floor() as usize).min(self.n - 1))
            .collect()
    }

    /// True iff every column has exactly one entry per stratum.
    pub fn has_lhs_property(&self) -> bool {
        (0..self.n_params()).all(|j| {
            let mut seen = vec![false; self.n];
            self.strata(j).into_iter().all(|s| !std::mem::replace(&mut seen[s], true))
        })
    }

    /// Same rows in a different order: `order[k]` is the source row of row `k`.
    pub fn reordered(&self, order: &[usize]) -> DesignMatrix {
        let rows = order.iter().map(|&i| self.row(i).to_vec()).collect();
        DesignMatrix::from_rows(self.space.clone(), rows, self.seed).expect("rows stay valid")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.space.names().join(",");
        out.push('\n');
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    /// Reads a design CSV whose header must match `space` names in order.
    pub fn read_csv(path: impl AsRef<Path>, space: &ParameterSpace, seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::parse(path, e))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::parse(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if header != space.names() {
            return Err(Error::parse(
                path,
                format!("header {:?} does not match parameter names {:?}", header, space.names()),
            ));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, e))?;
            let row = rec
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| Error::parse(path, format!("row {}: {e}", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        DesignMatrix::from_rows(space.clone(), rows, seed)
    }
}

/// Latin Hypercube sample with stratum midpoints.
pub fn lhs_sample(space: &ParameterSpace, n: usize, seed: u64) -> Result<DesignMatrix> {
    lhs_sample_with(space, n, seed, false)
}

/// Latin Hypercube sample; `jitter` places values uniformly inside their stratum.
pub fn lhs_sample_with(
    space: &ParameterSpace,
    n: usize,
    seed: u64,
    jitter: bool,
) -> Result<DesignMatrix> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    let d = space.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; n * d];
    let mut strata: Vec<usize> = (0..n).collect();
    for (j, p) in space.iter().enumerate() {
        strata.sort_unstable();
        strata.shuffle(&mut rng);
        for (i, &s) in strata.iter().enumerate() {
            let offset = if jitter { rng.random::<f64>() } else { 0.5 };
            let v = p.lower + (s as f64 + offset) / n as f64 * p.width();
            values[i * d + j] = v.clamp(p.lower, p.upper);
        }
    }
    Ok(DesignMatrix {
        space: space.clone(),
        n,
        values,
        seed,
    })
}

/// Pearson correlation between every pair of design columns.
pub fn correlation_matrix(design: &DesignMatrix) -> Result<Vec<Vec<f64>>> {
    let d = design.n_params();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| design.column(j)).collect();
    let mut out = vec![vec![0.0; d]; d];
    for j in 0..d {
        out[j][j] = 1.0;
        for k in j + 1..d {
            let r = pearson(&cols[j], &cols[k])?;
            out[j][k] = r;
            out[k][j] = r;
        }
    }
    // a lone column still needs a variance check
    if d == 1 {
        pearson(&cols[0], &cols[0])?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationObjective {
    /// Largest absolute off-diagonal coefficient.
    #[default]
    MaxAbsOffdiag,
    /// Frobenius norm of the off-diagonal part.
    FrobeniusOffdiag,
}

impl CorrelationObjective {
    pub fn evaluate(&self, corr: &[Vec<f64>]) -> f64 {
        let d = corr.len();
        let mut max: f64 = 0.0;
        let mut sum = 0.0;
        for j in 0..d {
            for k in j + 1..d {
                max = max.max(corr[j][k].abs());
                sum += 2.0 * corr[j][k] * corr[j][k];
            }
        }
        match self {
            CorrelationObjective::MaxAbsOffdiag => max,
            CorrelationObjective::FrobeniusOffdiag => sum.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealConfig {
    pub initial_temperature: f64,
    /// Geometric cooling factor applied after every sweep.
    pub cooling_factor: f64,
    /// Each sweep makes `n` swap proposals.
    pub sweeps: usize,
    pub objective: CorrelationObjective,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            initial_temperature: 1.0,
            cooling_factor: 0.95,
            sweeps: 200,
            objective: CorrelationObjective::MaxAbsOffdiag,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps < 1 {
            return Err(Error::InvalidConfig("anneal sweeps must be >= 1".into()));
        }
        if !(self.cooling_factor > 0.0 && self.cooling_factor < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "cooling factor must lie in (0, 1), got {}",
                self.cooling_factor
            )));
        }
        if !(self.initial_temperature > 0.0 && self.initial_temperature.is_finite()) {
            return Err(Error::InvalidConfig("initial temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Incremental correlation state: centred columns and their cross products.
struct CorrState {
    d: usize,
    centred: Vec<f64>,
    norms: Vec<f64>,
    dots: Vec<f64>,
}

impl CorrState {
    fn new(values: &[f64], n: usize, d: usize) -> Self {
        let mut centred = values.to_vec();
        let mut norms = vec![0.0; d];
        for j in 0..d {
            let mean = (0..n).map(|i| values[i * d + j]).sum::<f64>() / n as f64;
            for i in 0..n {
                centred[i * d + j] -= mean;
            }
            norms[j] = (0..n).map(|i| centred[i * d + j].powi(2)).sum::<f64>().sqrt();
        }
        let mut dots = vec![0.0; d * d];
        for j in 0..d {
            for k in 0..d {
                dots[j * d + k] = (0..n).map(|i| centred[i * d + j] * centred[i * d + k]).sum();
            }
        }
        CorrState { d, centred, norms, dots }
    }

    fn objective(&self, objective: CorrelationObjective, dots: &[f64]) -> f64 {
        let d = self.d;
        let mut max: f64 = 0.0;
        let mut sum = 0.0;
        for j in 0..d {
            for k in j + 1..d {
                let r = dots[j * d + k] / (self.norms[j] * self.norms[k]);
                max = max.max(r.abs());
                sum += 2.0 * r * r;
            }
        }
        match objective {
            CorrelationObjective::MaxAbsOffdiag => max,
            CorrelationObjective::FrobeniusOffdiag => sum.sqrt(),
        }
    }

    /// Cross products after swapping rows `a` and `b` of column `j`.
    fn swapped_dots(&self, j: usize, a: usize, b: usize, out: &mut [f64]) {
        let d = self.d;
        out.copy_from_slice(&self.dots);
        let diff = self.centred[b * d + j] - self.centred[a * d + j];
        for k in 0..d {
            if k == j {
                continue;
            }
            let delta = diff * (self.centred[a * d + k] - self.centred[b * d + k]);
            out[j * d + k] += delta;
            out[k * d + j] += delta;
        }
    }

    fn apply_swap(&mut self, j: usize, a: usize, b: usize, new_dots: &[f64]) {
        let d = self.d;
        self.centred.swap(a * d + j, b * d + j);
        self.dots.copy_from_slice(new_dots);
    }
}

/// Result of [`decorrelate_with_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealReport {
    pub objective_before: f64,
    pub objective_after: f64,
    pub accepted: usize,
    pub proposals: usize,
}

/// Lowers inter-column correlation by swapping values within columns.
///
/// The per-column value multisets (hence the LHS property) are preserved and
/// the returned design never scores worse than the input.
pub fn decorrelate(design: &DesignMatrix, cfg: &AnnealConfig, seed: u64) -> Result<DesignMatrix> {
    decorrelate_with_report(design, cfg, seed).map(|(d, _)| d)
}

pub fn decorrelate_with_report(
    design: &DesignMatrix,
    cfg: &AnnealConfig,
    seed: u64,
) -> Result<(DesignMatrix, AnnealReport)> {
    cfg.validate()?;
    let (n, d) = (design.n_samples(), design.n_params());
    if n < 3 || d < 2 {
        let obj = if n >= 2 && d >= 2 {
            cfg.objective.evaluate(&correlation_matrix(design)?)
        } else {
            0.0
        };
        let report = AnnealReport {
            objective_before: obj,
            objective_after: obj,
            accepted: 0,
            proposals: 0,
        };
        return Ok((design.clone(), report));
    }
    let mut state = CorrState::new(&design.values, n, d);
    if state.norms.iter().any(|&s| s == 0.0) {
        return Err(Error::UndefinedCorrelation("a design column"));
    }
    let mut values = design.values.clone();
    let mut current = state.objective(cfg.objective, &state.dots);
    let mut best = current;
    let mut best_values = values.clone();
    let mut scratch = vec![0.0; d * d];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut temperature = cfg.initial_temperature;
    let mut accepted = 0;
    let mut proposals = 0;

    for _ in 0..cfg.sweeps {
        for _ in 0..n {
            let j = rng.random_range(0..d);
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            proposals += 1;
            state.swapped_dots(j, a, b, &mut scratch);
            let candidate = state.objective(cfg.objective, &scratch);
            let delta = candidate - current;
            let accept = delta <= 0.0 || rng.random::<f64>() < (-delta / temperature).exp();
            if accept {
                state.apply_swap(j, a, b, &scratch);
                values.swap(a * d + j, b * d + j);
                current = candidate;
                accepted += 1;
                if current < best {
                    best = current;
                    best_values.copy_from_slice(&values);
                }
            }
        }
        temperature *= cfg.cooling_factor;
    }

    let mut out = DesignMatrix {
        space: design.space.clone(),
        n,
        values: best_values,
        seed: design.seed,
    };
    // compare on values recomputed from scratch, not the incremental ones
    let before = cfg.objective.evaluate(&correlation_matrix(design)?);
    let mut after = cfg.objective.evaluate(&correlation_matrix(&out)?);
    if after > before {
        out = design.clone();
        after = before;
    }
    Ok((
        out,
        AnnealReport {
            objective_before: before,
            objective_after: after,
            accepted,
            proposals,
        },
    ))
}

/// Sidecar metadata stored next to a design CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMeta {
    pub seed: u64,
    pub samples: usize,
    pub jitter: bool,
    pub space: ParameterSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anneal: Option<AnnealMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealMeta {
    pub config: AnnealConfig,
    pub seed: u64,
    pub report: AnnealReport,
}

impl DesignMeta {
    pub fn sidecar_path(design_csv: &Path) -> std::path::PathBuf {
        let mut name = design_csv
            .file_name()
            .map(|s| s.to_os_string())
            .unwrap_or_default();
        name.push(".meta.json");
        design_csv.with_file_name(name)
    }

    pub fn write(&self, design_csv: &Path) -> Result<()> {
        write_json(Self::sidecar_path(design_csv), self)
    }

    pub fn read(design_csv: &Path) -> Result<Self> {
        read_config_json(Self::sidecar_path(design_csv))
    }
}

/// Writes `design.csv` plus its metadata sidecar.
pub fn save_design(path: &Path, design: &DesignMatrix, meta: &DesignMeta) -> Result<()> {
    design.write_csv(path)?;
    meta.write(path)
}

/// Reads a design CSV using the space and seed recorded in its sidecar.
pub fn load_design(path: &Path) -> Result<(DesignMatrix, DesignMeta)> {
    let meta = DesignMeta::read(path)?;
    let design = DesignMatrix::read_csv(path, &meta.space, meta.seed)?;
    Ok((design, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Parameter;
    use proptest::prelude::*;
    use rand::Rng;

    fn unit(d: usize) -> ParameterSpace {
        ParameterSpace::new((0..d).map(|j| Parameter::new(format!("x{j}"), 0.0, 1.0)).collect()).unwrap()
    }

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn single_sample_sits_at_midpoints() {
        let space = ParameterSpace::new(vec![
            Parameter::new("a", 0.0, 2.0),
            Parameter::new("b", 10.0, 30.0),
        ])
        .unwrap();
        let d = lhs_sample(&space, 1, 99).unwrap();
        assert_eq!(d.row(0), &[1.0, 20.0]);
    }

    #[test]
    fn four_strata_midpoints() {
        let d = lhs_sample(&unit(1), 4, 5).unwrap();
        assert_eq!(sorted(d.column(0)), vec![0.125, 0.375, 0.625, 0.875]);
        assert!(d.has_lhs_property());
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let space = unit(3);
        let a = lhs_sample(&space, 20, 7).unwrap();
        let b = lhs_sample(&space, 20, 7).unwrap();
        let c = lhs_sample(&space, 20, 8).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn jittered_design_keeps_strata() {
        let d = lhs_sample_with(&unit(4), 50, 3, true).unwrap();
        assert!(d.has_lhs_property());
    }

    #[test]
    fn correlation_matrix_identical_and_mirrored_columns() {
        let space = unit(3);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                let x = (i as f64 + 0.5) / 5.0;
                vec![x, x, 1.0 - x]
            })
            .collect();
        let d = DesignMatrix::from_rows(space, rows, 0).unwrap();
        let c = correlation_matrix(&d).unwrap();
        assert!((c[0][1] - 1.0).abs() < 1e-15);
        assert!((c[0][2] + 1.0).abs() < 1e-15);
        assert_eq!(c[1][1], 1.0);
        assert_eq!(c[2][0], c[0][2]);
    }

    #[test]
    fn constant_column_is_an_error() {
        let rows = vec![vec![0.5, 0.1], vec![0.5, 0.9]];
        let d = DesignMatrix::from_rows(unit(2), rows, 0).unwrap();
        assert!(matches!(correlation_matrix(&d), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn fully_correlated_pair_gets_at_least_halved() {
        // exhaustive search over the 4! pairings: some pairing has r = 0
        let xs = [0.125, 0.375, 0.625, 0.875];
        let mut best = f64::INFINITY;
        let mut perm = [0usize, 1, 2, 3];
        loop {
            let ys: Vec<f64> = perm.iter().map(|&k| xs[k]).collect();
            best = best.min(pearson(&xs, &ys).unwrap().abs());
            // next permutation
            let mut i = 3;
            while i > 0 && perm[i - 1] >= perm[i] {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            let mut j = 3;
            while perm[j] <= perm[i - 1] {
                j -= 1;
            }
            perm.swap(i - 1, j);
            perm[i..].reverse();
        }
        assert!(best < 1e-12);

        let rows = xs.iter().map(|&x| vec![x, x]).collect();
        let d = DesignMatrix::from_rows(unit(2), rows, 0).unwrap();
        let (out, report) = decorrelate_with_report(&d, &AnnealConfig::default(), 1).unwrap();
        assert!((report.objective_before - 1.0).abs() < 1e-12);
        assert!(report.objective_after < 0.5, "{report:?}");
        assert_eq!(sorted(out.column(1)), xs.to_vec());
    }

    #[test]
    fn zero_correlation_design_is_not_made_worse() {
        // 4-point design with r = 0 (found by the exhaustive search above)
        let rows = vec![
            vec![0.125, 0.375],
            vec![0.375, 0.875],
            vec![0.625, 0.125],
            vec![0.875, 0.625],
        ];
        let d = DesignMatrix::from_rows(unit(2), rows, 0).unwrap();
        let before = CorrelationObjective::MaxAbsOffdiag.evaluate(&correlation_matrix(&d).unwrap());
        assert!(before < 1e-12);
        let out = decorrelate(&d, &AnnealConfig::default(), 2).unwrap();
        let after = CorrelationObjective::MaxAbsOffdiag.evaluate(&correlation_matrix(&out).unwrap());
        assert!(after <= before + 1e-15);
    }

    #[test]
    fn incremental_dots_track_full_recompute() {
        let d = lhs_sample(&unit(5), 30, 4).unwrap();
        let mut state = CorrState::new(&d.values, 30, 5);
        let mut values = d.values.clone();
        let mut scratch = vec![0.0; 25];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            let j = rng.random_range(0..5);
            let a = rng.random_range(0..30);
            let b = (a + 1 + rng.random_range(0..29)) % 30;
            state.swapped_dots(j, a, b, &mut scratch);
            state.apply_swap(j, a, b, &scratch);
            values.swap(a * 5 + j, b * 5 + j);
        }
        let fresh = CorrState::new(&values, 30, 5);
        for (x, y) in state.dots.iter().zip(&fresh.dots) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn csv_and_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let space = unit(2);
        let d = lhs_sample(&space, 6, 11).unwrap();
        let meta = DesignMeta {
            seed: 11,
            samples: 6,
            jitter: false,
            space: space.clone(),
            anneal: None,
        };
        let path = dir.path().join("design.csv");
        save_design(&path, &d, &meta).unwrap();
        let (back, meta_back) = load_design(&path).unwrap();
        assert_eq!(back, d);
        assert_eq!(meta_back, meta);
        assert!(dir.path().join("design.csv.meta.json").exists());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn lhs_property_survives_annealing(n in 2usize..60, dim in 1usize..6, seed in any::<u64>()) {
            let d = lhs_sample(&unit(dim), n, seed).unwrap();
            prop_assert!(d.has_lhs_property());
            let cfg = AnnealConfig { sweeps: 20, ..AnnealConfig::default() };
            let out = decorrelate(&d, &cfg, seed ^ 1).unwrap();
            prop_assert!(out.has_lhs_property());
            for j in 0..dim {
                prop_assert_eq!(sorted(d.column(j)), sorted(out.column(j)));
            }
            if n >= 3 && dim >= 2 {
                let f = |m: &DesignMatrix| CorrelationObjective::MaxAbsOffdiag.evaluate(&correlation_matrix(m).unwrap());
                prop_assert!(f(&out) <= f(&d) + 1e-12);
            }
        }
    }
}
