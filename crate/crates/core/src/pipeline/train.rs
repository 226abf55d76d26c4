//! Network training with GRADE over a bounded weight box.

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::ann::{dataset_error_with, Activation, Network, Pattern, Topology};
use crate::grade::{CerafConfig, Domain, GradeConfig, Optimizer};
use crate::io::fmt_f64;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub grade: GradeConfig,
    pub ceraf: CerafConfig,
    /// Every weight is searched in `[-weight_bound, weight_bound]`.
    pub weight_bound: f64,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            grade: GradeConfig::default(),
            ceraf: CerafConfig::default(),
            weight_bound: super::plan::DEFAULT_WEIGHT_BOUND,
            log_every: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub generation: u64,
    pub evaluations: u64,
    pub train_error: f64,
    pub test_error: f64,
    pub restarts: u32,
}

pub fn training_history_csv(history: &[TrainRecord]) -> String {
    let mut out = String::from("generation,evaluations,train_error,test_error,restarts\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.generation,
            r.evaluations,
            fmt_f64(r.train_error),
            fmt_f64(r.test_error),
            r.restarts
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNetwork {
    pub network: Network,
    pub history: Vec<TrainRecord>,
    pub evaluations: u64,
}

/// Minimizes the mean training error over the weight vector. The test error
/// of the incumbent is logged every `log_every` generations and at the end.
pub fn train_network(
    train: &[Pattern],
    test: &[Pattern],
    topology: &Topology,
    activation: Activation,
    cfg: &TrainConfig,
) -> Result<TrainedNetwork> {
    if train.is_empty() {
        return Err(Error::InsufficientData("no training patterns".into()));
    }
    for p in train.iter().chain(test) {
        if p.input.len() != topology.inputs() || p.target.len() != topology.outputs() {
            return Err(Error::Shape {
                what: "pattern against layout",
                expected: topology.inputs(),
                found: p.input.len(),
            });
        }
    }
    if cfg.log_every == 0 {
        return Err(Error::InvalidConfig("log_every must be positive".into()));
    }
    let domain = Domain::uniform(topology.weight_count(), -cfg.weight_bound, cfg.weight_bound)?;
    let objective = |w: &[f64]| dataset_error_with(topology, activation, w, train);
    let mut opt = Optimizer::new(objective, domain, cfg.grade.clone(), cfg.ceraf.clone())?;
    let mut history = Vec::new();
    let log = |opt: &Optimizer<_>, history: &mut Vec<TrainRecord>| {
        let best = opt.best().expect("initial population evaluated");
        let test_error = if test.is_empty() {
            f64::NAN
        } else {
            dataset_error_with(topology, activation, &best.x, test)
        };
        history.push(TrainRecord {
            generation: opt.generation(),
            evaluations: opt.evaluations(),
            train_error: best.fitness,
            test_error,
            restarts: opt.restarts(),
        });
    };
    log(&opt, &mut history);
    while opt.step() {
        if opt.generation() % cfg.log_every == 0 {
            log(&opt, &mut history);
        }
    }
    if history.last().map(|r| r.generation) != Some(opt.generation()) {
        log(&opt, &mut history);
    }
    let evaluations = opt.evaluations();
    let outcome = opt.finish();
    let network = Network::from_vector_with(topology.clone(), activation, outcome.best.x)?;
    Ok(TrainedNetwork { network, history, evaluations })
}

/// [`train_network`] on a prepared dataset.
pub fn train_stage(
    dataset: &Dataset,
    topology: &Topology,
    activation: Activation,
    cfg: &TrainConfig,
) -> Result<TrainedNetwork> {
    train_network(&dataset.train, &dataset.test, topology, activation, cfg)
}
