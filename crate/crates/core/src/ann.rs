//! Layered, fully connected feed-forward networks with bias neurons.
//!
//! Layers `0..L` have sizes `N_0..N_{L-1}`; every layer except the output
//! layer carries an extra bias neuron with constant output 1. The output of
//! neuron `j` in layer `l >= 1` is `f(Σ_i O_{l-1,i} · w_{l,i,j})` with `i = 0`
//! the bias.
//!
//! Weights are stored flat in canonical order: layer `l` ascending, then
//! target neuron `j`, then source index `i` with the bias first. The
//! incoming weights of one neuron are therefore contiguous.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{read_json, write_json};
use crate::{Error, Result};

/// Format tag written into serialized networks.
pub const NETWORK_FORMAT: &str = "paramid.network.v1";

pub const DEFAULT_GAIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// `1 / (1 + exp(-gain · Σ))`.
    #[default]
    Sigmoid,
    /// `1 / (1 + exp(-gain / Σ))`, with `Σ = 0` mapped to 0.5.
    ReciprocalSum,
}

/// Logistic activation with gain `gain`; `activation(0, _) = 0.5`.
pub fn activation(sum: f64, gain: f64) -> f64 {
    1.0 / (1.0 + (-gain * sum).exp())
}

impl Activation {
    pub fn apply(self, sum: f64, gain: f64) -> f64 {
        match self {
            Activation::Sigmoid => activation(sum, gain),
            Activation::ReciprocalSum => {
                if sum == 0.0 {
                    0.5
                } else {
                    1.0 / (1.0 + (-gain / sum).exp())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTopology")]
pub struct Topology {
    layer_sizes: Vec<usize>,
    gain: f64,
}

#[derive(Deserialize)]
struct RawTopology {
    layer_sizes: Vec<usize>,
    #[serde(default = "default_gain")]
    gain: f64,
}

fn default_gain() -> f64 {
    DEFAULT_GAIN
}

impl TryFrom<RawTopology> for Topology {
    type Error = Error;

    fn try_from(raw: RawTopology) -> Result<Self> {
        Topology::with_gain(raw.layer_sizes, raw.gain)
    }
}

impl Topology {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        Self::with_gain(layer_sizes, DEFAULT_GAIN)
    }

    pub fn with_gain(layer_sizes: Vec<usize>, gain: f64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "a network needs at least 2 layers, got {}",
                layer_sizes.len()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "every layer needs at least one neuron: {layer_sizes:?}"
            )));
        }
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::InvalidConfig(format!("gain must be positive, got {gain}")));
        }
        Ok(Topology { layer_sizes, gain })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    /// `Σ_{l≥1} (N_{l-1} + 1) · N_l`.
    pub fn weight_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn widest(&self) -> usize {
        self.layer_sizes.iter().copied().max().unwrap_or(0)
    }

    /// Propagates `input` through the weights in `weights` without allocating
    /// a [`Network`]. `buf` is reused scratch space; the returned slice is the
    /// output layer.
    pub fn propagate_into<'a>(
        &self,
        activation: Activation,
        weights: &[f64],
        input: &[f64],
        buf: &'a mut Vec<f64>,
    ) -> &'a [f64] {
        debug_assert_eq!(weights.len(), self.weight_count());
        debug_assert_eq!(input.len(), self.inputs());
        let width = self.widest();
        buf.clear();
        buf.resize(2 * width, 0.0);
        let (mut prev, mut next) = buf.split_at_mut(width);
        prev[..input.len()].copy_from_slice(input);
        let mut offset = 0;
        for w in self.layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            for j in 0..n_out {
                let row = &weights[offset..offset + n_in + 1];
                let mut sum = row[0];
                for i in 0..n_in {
                    sum += prev[i] * row[i + 1];
                }
                next[j] = activation.apply(sum, self.gain);
                offset += n_in + 1;
            }
            std::mem::swap(&mut prev, &mut next);
        }
        let out = self.outputs();
        // `prev` holds the last layer; figure out which half it is
        let first_half = self.layer_sizes.len() % 2 == 1;
        if first_half {
            &buf[..out]
        } else {
            &buf[width..width + out]
        }
    }
}

/// A topology plus its flat weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    topology: Topology,
    activation: Activation,
    weights: Vec<f64>,
}

impl Network {
    pub fn zeros(topology: Topology) -> Self {
        let weights = vec![0.0; topology.weight_count()];
        Network {
            topology,
            activation: Activation::Sigmoid,
            weights,
        }
    }

    /// Rebuilds a network from its canonical weight vector.
    pub fn from_vector(topology: Topology, weights: Vec<f64>) -> Result<Self> {
        Self::from_vector_with(topology, Activation::Sigmoid, weights)
    }

    pub fn from_vector_with(
        topology: Topology,
        activation: Activation,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != topology.weight_count() {
            return Err(Error::Shape {
                what: "weight vector",
                expected: topology.weight_count(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("network weights must be finite".into()));
        }
        Ok(Network {
            topology,
            activation,
            weights,
        })
    }

    pub fn to_vector(&self) -> Vec<f64> {
        self.weights.clone()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Weight `w_{l,i,j}`: layer `l ≥ 1`, source `i` (0 = bias), target `j ≥ 1`.
    pub fn weight(&self, l: usize, i: usize, j: usize) -> f64 {
        self.weights[weight_index(&self.topology, l, i, j)]
    }

    pub fn propagate(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.topology.inputs() {
            return Err(Error::Shape {
                what: "network input",
                expected: self.topology.inputs(),
                found: input.len(),
            });
        }
        let mut buf = Vec::new();
        Ok(self
            .topology
            .propagate_into(self.activation, &self.weights, input, &mut buf)
            .to_vec())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, &NetworkFile::from(self))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: NetworkFile = read_json(path)?;
        Network::try_from(file).map_err(|e| Error::parse(path, e))
    }
}

/// Flat index of `w_{l,i,j}` in the canonical order.
pub fn weight_index(topology: &Topology, l: usize, i: usize, j: usize) -> usize {
    let sizes = topology.layer_sizes();
    assert!(l >= 1 && l < sizes.len(), "layer {l} out of range");
    assert!(i <= sizes[l - 1] && j >= 1 && j <= sizes[l], "neuron index out of range");
    let before: usize = sizes[..l].windows(2).map(|w| (w[0] + 1) * w[1]).sum();
    before + (j - 1) * (sizes[l - 1] + 1) + i
}

/// Serialized network (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub format: String,
    pub topology: Topology,
    #[serde(default)]
    pub activation: Activation,
    pub weights: Vec<f64>,
}

impl From<&Network> for NetworkFile {
    fn from(net: &Network) -> Self {
        NetworkFile {
            format: NETWORK_FORMAT.to_string(),
            topology: net.topology.clone(),
            activation: net.activation,
            weights: net.weights.clone(),
        }
    }
}

impl TryFrom<NetworkFile> for Network {
    type Error = Error;

    fn try_from(file: NetworkFile) -> Result<Self> {
        if file.format != NETWORK_FORMAT {
            return Err(Error::InvalidConfig(format!(
                "unsupported network format `{}`",
                file.format
            )));
        }
        Network::from_vector_with(file.topology, file.activation, file.weights)
    }
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = NetworkFile::deserialize(d)?;
        Network::try_from(file).map_err(serde::de::Error::custom)
    }
}

/// One training example: input vector and target vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Euclidean norm of `target - output`.
pub fn pattern_error(target: &[f64], output: &[f64]) -> Result<f64> {
    if target.len() != output.len() {
        return Err(Error::Shape {
            what: "pattern error",
            expected: target.len(),
            found: output.len(),
        });
    }
    Ok(target
        .iter()
        .zip(output)
        .map(|(t, o)| (t - o) * (t - o))
        .sum::<f64>()
        .sqrt())
}

/// Mean of [`pattern_error`] over `patterns`.
pub fn dataset_error(net: &Network, patterns: &[Pattern]) -> Result<f64> {
    if patterns.is_empty() {
        return Err(Error::InsufficientData("empty pattern set".into()));
    }
    let mut total = 0.0;
    for p in patterns {
        total += pattern_error(&p.target, &net.propagate(&p.input)?)?;
    }
    Ok(total / patterns.len() as f64)
}

/// Allocation-light [`dataset_error`] over a raw weight slice; used as the
/// training objective. Shapes must already be validated.
pub fn dataset_error_with(
    topology: &Topology,
    activation: Activation,
    weights: &[f64],
    patterns: &[Pattern],
) -> f64 {
    let mut buf = Vec::with_capacity(2 * topology.widest());
    let mut total = 0.0;
    for p in patterns {
        let out = topology.propagate_into(activation, weights, &p.input, &mut buf);
        total += p
            .target
            .iter()
            .zip(out)
            .map(|(t, o)| (t - o) * (t - o))
            .sum::<f64>()
            .sqrt();
    }
    total / patterns.len() as f64
}
