//! GRADE: real-coded evolutionary minimizer with mutation, gradient
//! cross-over and modified tournament selection, plus CERAF restarts that
//! mark stagnation points with "radioactive" zones.
//!
//! One generation:
//! 1. every member draws one uniform number and is mutated if it falls below
//!    the mutation probability (`radioactivity`, or the zone probability when
//!    the member lies inside a zone). Zone members are replaced by their
//!    mutant; other mutants join the pool next to their parents.
//! 2. cross-over creates `population` children from random pairs of the pool.
//!    A child landing in a zone shrinks that zone and is mutated.
//! 3. random-pair tournaments cut the pool back to `population`.
//!
//! Evaluation happens in batches (one per phase), so the fitness budget is
//! counted exactly and batches can be evaluated in parallel without changing
//! results.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::{fmt_f64, write_text};
use crate::{Error, Result};

/// Box constraints, one `(lower, upper)` pair per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    bounds: Vec<(f64, f64)>,
}

impl Domain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidConfig("domain has no variables".into()));
        }
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "variable {k}: bounds [{lo}, {hi}] are not a proper interval"
                )));
            }
        }
        Ok(Domain { bounds })
    }

    /// The same interval for all `n` variables.
    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![(lower, upper); n])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.bounds).all(|(v, &(lo, hi))| (lo..=hi).contains(v))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(lo, hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradeConfig {
    /// Population size is `pool_rate × dimension`.
    pub pool_rate: usize,
    pub radioactivity: f64,
    /// Upper limit of the cross-over step factor.
    pub cross_limit: f64,
    pub max_fitness_calls: u64,
    pub seed: u64,
    /// Evaluate each batch on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for GradeConfig {
    fn default() -> Self {
        GradeConfig {
            pool_rate: 10,
            radioactivity: 0.2,
            cross_limit: 1.0,
            max_fitness_calls: 100_000,
            seed: 0,
            parallel: false,
        }
    }
}

impl GradeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_rate < 2 {
            return Err(Error::InvalidConfig(format!(
                "pool_rate must be at least 2, got {}",
                self.pool_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.radioactivity) {
            return Err(Error::InvalidConfig(format!(
                "radioactivity must lie in [0, 1], got {}",
                self.radioactivity
            )));
        }
        if !(self.cross_limit > 0.0 && self.cross_limit.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "cross_limit must be positive, got {}",
                self.cross_limit
            )));
        }
        if self.max_fitness_calls == 0 {
            return Err(Error::InvalidConfig("max_fitness_calls must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CerafConfig {
    pub enabled: bool,
    pub stagnation_generations: usize,
    pub stagnation_epsilon: f64,
    /// Zone diameter as a fraction of each variable's interval.
    pub zone_diameter_fraction: f64,
    pub zone_mutation_probability: f64,
    /// Semi-axis factor applied each time a cross-over child lands in a zone.
    pub radius_decay: f64,
}

impl Default for CerafConfig {
    fn default() -> Self {
        CerafConfig {
            enabled: true,
            stagnation_generations: 100,
            stagnation_epsilon: 5e-11,
            zone_diameter_fraction: 0.75,
            zone_mutation_probability: 1.0,
            radius_decay: 0.997,
        }
    }
}

impl CerafConfig {
    pub fn disabled() -> Self {
        CerafConfig {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidConfig(format!("ceraf {what} out of range: {v}")))
        };
        if self.stagnation_generations == 0 {
            return bad("stagnation_generations", 0.0);
        }
        if !(self.stagnation_epsilon > 0.0) {
            return bad("stagnation_epsilon", self.stagnation_epsilon);
        }
        if !(self.zone_diameter_fraction > 0.0 && self.zone_diameter_fraction <= 1.0) {
            return bad("zone_diameter_fraction", self.zone_diameter_fraction);
        }
        if !(self.zone_mutation_probability > 0.0 && self.zone_mutation_probability <= 1.0) {
            return bad("zone_mutation_probability", self.zone_mutation_probability);
        }
        if !(self.radius_decay > 0.0 && self.radius_decay < 1.0) {
            return bad("radius_decay", self.radius_decay);
        }
        Ok(())
    }
}

/// Axis-aligned hyper-ellipsoid around a former stagnation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioactiveZone {
    pub center: Vec<f64>,
    pub semi_axes: Vec<f64>,
}

impl RadioactiveZone {
    pub fn around(center: Vec<f64>, domain: &Domain, diameter_fraction: f64) -> Self {
        let semi_axes = domain
            .bounds()
            .iter()
            .map(|&(lo, hi)| 0.5 * diameter_fraction * (hi - lo))
            .collect();
        RadioactiveZone { center, semi_axes }
    }

    /// `Σ((pᵢ − cᵢ)/aᵢ)² ≤ 1`.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(&self.center)
            .zip(&self.semi_axes)
            .map(|((x, c), a)| ((x - c) / a).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    fn shrink(&mut self, factor: f64) {
        for a in &mut self.semi_axes {
            *a *= factor;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome {
    pub x: Vec<f64>,
    pub fitness: f64,
}

/// `parent + MR·(RP − parent)` with `RP` uniform in the domain and `MR`
/// uniform in (0, 1).
pub fn mutate<R: Rng + ?Sized>(parent: &[f64], domain: &Domain, rng: &mut R) -> Vec<f64> {
    let rp = domain.sample(rng);
    let mr = open_unit(rng);
    mutate_with(parent, &rp, mr)
}

fn mutate_with(parent: &[f64], rp: &[f64], mr: f64) -> Vec<f64> {
    parent.iter().zip(rp).map(|(x, r)| x + mr * (r - x)).collect()
}

/// Uniform in the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = rng.random::<f64>();
        if u > 0.0 {
            return u;
        }
    }
}

/// Gradient cross-over: `better + CR·(better − worse)` with `CR` uniform in
/// `(0, cross_limit)`, clipped to the domain. On equal fitness `q` counts as
/// the better parent.
pub fn crossover<R: Rng + ?Sized>(
    q: &Chromosome,
    r: &Chromosome,
    domain: &Domain,
    cross_limit: f64,
    rng: &mut R,
) -> Vec<f64> {
    let cr = cross_limit * open_unit(rng);
    let mut child = crossover_with(q, r, cr);
    domain.clip(&mut child);
    child
}

fn crossover_with(q: &Chromosome, r: &Chromosome, cr: f64) -> Vec<f64> {
    let (better, worse) = if r.fitness < q.fitness { (r, q) } else { (q, r) };
    better
        .x
        .iter()
        .zip(&worse.x)
        .map(|(b, w)| b + cr * (b - w))
        .collect()
}

/// Modified tournament: random distinct pairs, the worse one is removed
/// (the second one on ties), until `target_size` remain.
pub fn select<R: Rng + ?Sized>(
    mut population: Vec<Chromosome>,
    target_size: usize,
    rng: &mut R,
) -> Vec<Chromosome> {
    while population.len() > target_size.max(1) {
        let n = population.len();
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let loser = if population[j].fitness < population[i].fitness { i } else { j };
        population.swap_remove(loser);
    }
    population
}

/// Per-generation record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u64,
    pub evaluations: u64,
    /// Best value seen so far across all epochs.
    pub best: f64,
    pub restarts: u32,
    /// Cumulative count of non-finite objective values.
    pub non_finite: u64,
}

pub fn history_csv(history: &[GenerationRecord]) -> String {
    let mut out = String::from("generation,evaluations,best,restarts,non_finite\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.generation,
            r.evaluations,
            fmt_f64(r.best),
            r.restarts,
            r.non_finite
        ));
    }
    out
}

pub fn write_history_csv(path: impl AsRef<Path>, history: &[GenerationRecord]) -> Result<()> {
    write_text(path, &history_csv(history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub best: Chromosome,
    pub history: Vec<GenerationRecord>,
    pub evaluations: u64,
    pub restarts: u32,
    pub zones: Vec<RadioactiveZone>,
}

/// GRADE run as an explicit state machine; call [`Optimizer::step`] until it
/// returns `false`.
pub struct Optimizer<F> {
    objective: F,
    domain: Domain,
    grade: GradeConfig,
    ceraf: CerafConfig,
    rng: ChaCha8Rng,
    population: Vec<Chromosome>,
    zones: Vec<RadioactiveZone>,
    best: Option<Chromosome>,
    epoch_best: f64,
    stagnant: usize,
    evaluations: u64,
    non_finite: u64,
    restarts: u32,
    generation: u64,
    history: Vec<GenerationRecord>,
}

impl<F> Optimizer<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    /// Validates the configuration and evaluates the initial population.
    pub fn new(objective: F, domain: Domain, grade: GradeConfig, ceraf: CerafConfig) -> Result<Self> {
        grade.validate()?;
        ceraf.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(grade.seed);
        let mut opt = Optimizer {
            objective,
            domain,
            grade,
            ceraf,
            rng,
            population: Vec::new(),
            zones: Vec::new(),
            best: None,
            epoch_best: f64::INFINITY,
            stagnant: 0,
            evaluations: 0,
            non_finite: 0,
            restarts: 0,
            generation: 0,
            history: Vec::new(),
        };
        opt.populate();
        opt.record();
        Ok(opt)
    }

    pub fn population_size(&self) -> usize {
        self.grade.pool_rate * self.domain.dim()
    }

    pub fn population(&self) -> &[Chromosome] {
        &self.population
    }

    pub fn best(&self) -> Option<&Chromosome> {
        self.best.as_ref()
    }

    pub fn history(&self) -> &[GenerationRecord] {
        &self.history
    }

    pub fn zones(&self) -> &[RadioactiveZone] {
        &self.zones
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    pub fn exhausted(&self) -> bool {
        self.evaluations >= self.grade.max_fitness_calls
    }

    fn remaining(&self) -> usize {
        self.grade.max_fitness_calls.saturating_sub(self.evaluations) as usize
    }

    /// Evaluates as many candidates as the budget allows; the rest are dropped.
    fn evaluate(&mut self, mut xs: Vec<Vec<f64>>) -> Vec<Chromosome> {
        xs.truncate(self.remaining());
        let f = &self.objective;
        let values: Vec<f64> = if self.grade.parallel {
            xs.par_iter().map(|x| f(x)).collect()
        } else {
            xs.iter().map(|x| f(x)).collect()
        };
        self.evaluations += xs.len() as u64;
        let out: Vec<Chromosome> = xs
            .into_iter()
            .zip(values)
            .map(|(x, v)| {
                let fitness = if v.is_finite() {
                    v
                } else {
                    self.non_finite += 1;
                    f64::INFINITY
                };
                Chromosome { x, fitness }
            })
            .collect();
        for c in &out {
            if self.best.as_ref().is_none_or(|b| c.fitness < b.fitness) {
                self.best = Some(c.clone());
            }
        }
        out
    }

    fn populate(&mut self) {
        let n = self.population_size();
        let xs: Vec<Vec<f64>> = (0..n).map(|_| self.domain.sample(&mut self.rng)).collect();
        self.population = self.evaluate(xs);
        self.epoch_best = epoch_min(&self.population);
        self.stagnant = 0;
    }

    fn record(&mut self) {
        self.history.push(GenerationRecord {
            generation: self.generation,
            evaluations: self.evaluations,
            best: self.best.as_ref().map_or(f64::INFINITY, |b| b.fitness),
            restarts: self.restarts,
            non_finite: self.non_finite,
        });
    }

    /// Runs one generation. Returns `false` once the budget is spent.
    pub fn step(&mut self) -> bool {
        if self.exhausted() || self.population.len() < 2 {
            return false;
        }
        let target = self.population_size();

        // mutation
        let (replace, added) = mutation_phase(
            &self.population,
            &self.zones,
            &self.domain,
            self.grade.radioactivity,
            self.ceraf.zone_mutation_probability,
            &mut self.rng,
        );
        let (slots, xs): (Vec<usize>, Vec<Vec<f64>>) = replace.into_iter().unzip();
        let replaced = self.evaluate(xs);
        for (k, c) in slots.into_iter().zip(replaced) {
            self.population[k] = c;
        }
        let added = self.evaluate(added);
        self.population.extend(added);

        // cross-over
        let pool = self.population.len();
        let mut children = Vec::with_capacity(target);
        for _ in 0..target {
            let q = self.rng.random_range(0..pool);
            let mut r = self.rng.random_range(0..pool - 1);
            if r >= q {
                r += 1;
            }
            let mut child = crossover(
                &self.population[q],
                &self.population[r],
                &self.domain,
                self.grade.cross_limit,
                &mut self.rng,
            );
            if let Some(zone) = self.zones.iter_mut().find(|z| z.contains(&child)) {
                zone.shrink(self.ceraf.radius_decay);
                if self.rng.random::<f64>() < self.ceraf.zone_mutation_probability {
                    child = mutate(&child, &self.domain, &mut self.rng);
                }
            }
            children.push(child);
        }
        let children = self.evaluate(children);
        self.population.extend(children);

        // selection
        let population = std::mem::take(&mut self.population);
        self.population = select(population, target, &mut self.rng);
        self.generation += 1;

        // stagnation bookkeeping
        let current = epoch_min(&self.population);
        if self.epoch_best - current < self.ceraf.stagnation_epsilon {
            self.stagnant += 1;
        } else {
            self.stagnant = 0;
        }
        self.epoch_best = self.epoch_best.min(current);
        if self.ceraf.enabled && self.stagnant >= self.ceraf.stagnation_generations {
            let center = self
                .population
                .iter()
                .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
                .map(|c| c.x.clone())
                .expect("non-empty population");
            self.zones.push(RadioactiveZone::around(
                center,
                &self.domain,
                self.ceraf.zone_diameter_fraction,
            ));
            self.restarts += 1;
            self.populate();
        }
        self.record();
        !self.exhausted()
    }

    pub fn run(mut self) -> Outcome {
        while self.step() {}
        self.finish()
    }

    pub fn finish(self) -> Outcome {
        Outcome {
            best: self.best.expect("budget is positive, so something was evaluated"),
            history: self.history,
            evaluations: self.evaluations,
            restarts: self.restarts,
            zones: self.zones,
        }
    }
}

/// Mutation decisions for one generation: one uniform draw per member, plus
/// the draws of [`mutate`] for members that are mutated. Returns mutants that
/// replace zone members (with their slot) and mutants joining the pool.
pub fn mutation_phase<R: Rng + ?Sized>(
    population: &[Chromosome],
    zones: &[RadioactiveZone],
    domain: &Domain,
    radioactivity: f64,
    zone_probability: f64,
    rng: &mut R,
) -> (Vec<(usize, Vec<f64>)>, Vec<Vec<f64>>) {
    let mut replace = Vec::new();
    let mut added = Vec::new();
    for (k, member) in population.iter().enumerate() {
        let zoned = zones.iter().any(|z| z.contains(&member.x));
        let p = if zoned { zone_probability } else { radioactivity };
        if rng.random::<f64>() < p {
            let child = mutate(&member.x, domain, rng);
            if zoned {
                replace.push((k, child));
            } else {
                added.push(child);
            }
        }
    }
    (replace, added)
}

fn epoch_min(population: &[Chromosome]) -> f64 {
    population
        .iter()
        .map(|c| c.fitness)
        .fold(f64::INFINITY, f64::min)
}

/// Minimizes `objective` over `domain` until the fitness budget is spent.
pub fn evolve<F>(objective: F, domain: Domain, grade: GradeConfig, ceraf: CerafConfig) -> Result<Outcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    Ok(Optimizer::new(objective, domain, grade, ceraf)?.run())
}
