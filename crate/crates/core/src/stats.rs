//! Pearson correlation and stochastic sensitivity analysis of curve bundles.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doe::DesignMatrix;
use crate::io::{fmt_f64, write_text};
use crate::models::ModelFailure;
use crate::{Error, ResponseCurve, Result};

/// Pearson product-moment correlation, two-pass.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            what: "correlation inputs",
            expected: x.len(),
            found: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 2 values, got {n}"
        )));
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mean_x, b - mean_y);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("first input"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("second input"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Outcome of simulating one design row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowOutcome {
    Valid(ResponseCurve),
    Failed(ModelFailure),
}

impl RowOutcome {
    pub fn curve(&self) -> Option<&ResponseCurve> {
        match self {
            RowOutcome::Valid(c) => Some(c),
            RowOutcome::Failed(_) => None,
        }
    }
}

/// Curves produced by simulating every row of a design.
#[derive(Debug, Clone)]
pub struct CurveBundle {
    design: DesignMatrix,
    outcomes: Vec<RowOutcome>,
}

impl CurveBundle {
    pub fn new(design: DesignMatrix, outcomes: Vec<RowOutcome>) -> Result<Self> {
        if outcomes.len() != design.n_samples() {
            return Err(Error::Shape {
                what: "bundle rows",
                expected: design.n_samples(),
                found: outcomes.len(),
            });
        }
        Ok(CurveBundle { design, outcomes })
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn outcomes(&self) -> &[RowOutcome] {
        &self.outcomes
    }

    pub fn curve(&self, row: usize) -> Option<&ResponseCurve> {
        self.outcomes.get(row).and_then(RowOutcome::curve)
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.outcomes
            .iter()
            .map(|o| matches!(o, RowOutcome::Valid(_)))
            .collect()
    }

    pub fn valid_count(&self) -> usize {
        self.valid_mask().into_iter().filter(|&v| v).count()
    }

    /// Row indices with a valid curve, ascending.
    pub fn valid_rows(&self) -> Vec<usize> {
        (0..self.outcomes.len())
            .filter(|&i| self.curve(i).is_some())
            .collect()
    }

    /// Strain range covered by every valid curve.
    pub fn common_range(&self) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        for c in self.outcomes.iter().filter_map(RowOutcome::curve) {
            let (a, b) = (c.first_strain(), c.last_strain());
            range = Some(match range {
                None => (a, b),
                Some((lo, hi)) => (lo.max(a), hi.min(b)),
            });
        }
        range.filter(|(lo, hi)| lo <= hi)
    }
}

/// Per-parameter Pearson coefficient at each strain of a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTrace {
    pub strain_grid: Vec<f64>,
    /// `(parameter, one coefficient per grid strain)`, in design column order.
    pub coefficients: Vec<(String, Vec<f64>)>,
}

impl SensitivityTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strain");
        for (name, _) in &self.coefficients {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (k, s) in self.strain_grid.iter().enumerate() {
            out.push_str(&fmt_f64(*s));
            for (_, values) in &self.coefficients {
                out.push(',');
                out.push_str(&fmt_f64(values[k]));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    pub fn get(&self, parameter: &str) -> Option<&[f64]> {
        self.coefficients
            .iter()
            .find(|(n, _)| n == parameter)
            .map(|(_, v)| v.as_slice())
    }
}

fn require_valid(bundle: &CurveBundle) -> Result<Vec<usize>> {
    let rows = bundle.valid_rows();
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "sensitivity needs at least 2 valid curves, bundle has {}",
            rows.len()
        )));
    }
    Ok(rows)
}

/// Pearson coefficient between each design column and the interpolated
/// stress at every strain of `common_grid`, over valid rows only.
///
/// A grid strain where every valid curve has the same stress carries no
/// measurable dependence and is reported as 0.
pub fn sensitivity_evolution(bundle: &CurveBundle, common_grid: &[f64]) -> Result<SensitivityTrace> {
    let rows = require_valid(bundle)?;
    let design = bundle.design();
    let columns: Vec<Vec<f64>> = (0..design.n_params())
        .map(|j| rows.iter().map(|&i| design.value(i, j)).collect())
        .collect();
    if columns.iter().any(|col| col.iter().all(|&v| v == col[0])) {
        return Err(Error::UndefinedCorrelation("a design column"));
    }
    let per_point: Vec<Vec<f64>> = common_grid
        .par_iter()
        .map(|&strain| -> Result<Vec<f64>> {
            let stress = rows
                .iter()
                .map(|&i| bundle.curve(i).expect("valid row").stress_at_strain(strain))
                .collect::<Result<Vec<_>>>()?;
            if stress.iter().all(|&s| s == stress[0]) {
                return Ok(vec![0.0; columns.len()]);
            }
            columns.iter().map(|col| pearson(col, &stress)).collect()
        })
        .collect::<Result<_>>()?;
    let coefficients = design
        .space()
        .names()
        .into_iter()
        .enumerate()
        .map(|(j, name)| (name.to_string(), per_point.iter().map(|p| p[j]).collect()))
        .collect();
    Ok(SensitivityTrace {
        strain_grid: common_grid.to_vec(),
        coefficients,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSensitivity {
    pub parameter: String,
    pub r_peak_strain: f64,
    pub r_peak_stress: f64,
}

/// Pearson coefficients between each parameter and the peak coordinates.
pub fn peak_sensitivity(bundle: &CurveBundle) -> Result<Vec<PeakSensitivity>> {
    let rows = require_valid(bundle)?;
    let peaks: Vec<_> = rows
        .iter()
        .map(|&i| bundle.curve(i).expect("valid row").peak())
        .collect();
    let eps: Vec<f64> = peaks.iter().map(|p| p.strain).collect();
    let sig: Vec<f64> = peaks.iter().map(|p| p.stress).collect();
    let design = bundle.design();
    design
        .space()
        .names()
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = rows.iter().map(|&i| design.value(i, j)).collect();
            Ok(PeakSensitivity {
                parameter: name.to_string(),
                r_peak_strain: pearson(&col, &eps)?,
                r_peak_stress: pearson(&col, &sig)?,
            })
        })
        .collect()
}

pub fn peak_table_csv(rows: &[PeakSensitivity]) -> String {
    let mut out = String::from("parameter,r_peak_strain,r_peak_stress\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.parameter,
            fmt_f64(r.r_peak_strain),
            fmt_f64(r.r_peak_stress)
        ));
    }
    out
}
