//! Intersection of two mutually dependent predictions `p = A(q)`, `q = B(p)`.
//!
//! Both coordinates live in the unit box (fractions of their parameter
//! intervals). A damped fixed-point iteration from the box centre is tried
//! first; if it does not converge a cell-centred grid scan picks the point
//! with the smallest residual `max(|p − A(q)|, |q − B(p)|)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledConfig {
    pub damping: f64,
    pub max_steps: usize,
    pub tolerance: f64,
    pub grid_cells: usize,
    /// Largest residual accepted from the grid scan.
    pub grid_tolerance: f64,
}

impl Default for CoupledConfig {
    fn default() -> Self {
        CoupledConfig {
            damping: 0.5,
            max_steps: 1000,
            tolerance: 1e-10,
            grid_cells: 512,
            grid_tolerance: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoupledMethod {
    FixedPoint,
    GridScan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledSolution {
    /// Unit-box coordinates.
    pub p: f64,
    pub q: f64,
    pub residual: f64,
    pub method: CoupledMethod,
    pub steps: usize,
}

// `f64::max` drops NaN, which would hide a failed prediction
fn worst(d1: f64, d2: f64) -> f64 {
    if d1.is_nan() || d2.is_nan() {
        f64::INFINITY
    } else {
        d1.abs().max(d2.abs())
    }
}

fn residual(a: &dyn Fn(f64) -> f64, b: &dyn Fn(f64) -> f64, p: f64, q: f64) -> f64 {
    worst(p - a(q), q - b(p))
}

pub fn solve_coupled(
    a: &dyn Fn(f64) -> f64,
    b: &dyn Fn(f64) -> f64,
    cfg: &CoupledConfig,
) -> Result<CoupledSolution> {
    let (mut p, mut q) = (0.5, 0.5);
    for step in 0..=cfg.max_steps {
        let (ap, bq) = (a(q), b(p));
        let r = worst(p - ap, q - bq);
        if !r.is_finite() {
            break;
        }
        if r <= cfg.tolerance {
            return Ok(CoupledSolution { p, q, residual: r, method: CoupledMethod::FixedPoint, steps: step });
        }
        p += cfg.damping * (ap - p);
        q += cfg.damping * (bq - q);
    }

    let n = cfg.grid_cells.max(1);
    let mut best = (f64::INFINITY, 0.5, 0.5);
    for i in 0..n {
        let p = (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let q = (j as f64 + 0.5) / n as f64;
            let r = residual(a, b, p, q);
            if r < best.0 {
                best = (r, p, q);
            }
        }
    }
    let (r, p, q) = best;
    if r <= cfg.grid_tolerance {
        Ok(CoupledSolution { p, q, residual: r, method: CoupledMethod::GridScan, steps: n * n })
    } else {
        Err(Error::NoIntersection { residual: r, p, q })
    }
}
