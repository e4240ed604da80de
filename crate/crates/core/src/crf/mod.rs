//! Linear-chain conditional random field over the five BILOU labels.
//!
//! Sparse token features are binarized into *attributes*: boolean and
//! categorical entries become indicators such as `0:special=End` with value 1,
//! numeric entries (`bias`, `*:length`) keep their key and carry their value.
//! Each attribute has one weight per label. Label pairs, the first label and
//! the last label have dense weights of their own, so every transition exists
//! whether or not it was observed in training.

mod io;
pub mod lattice;
pub mod optim;
mod train;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureValue, FeatureVector};
use crate::spans::{Label, LabelSequence};

pub use io::{load_model, read_model, save_model, write_model, FORMAT_VERSION};
pub use lattice::{Marginals, Potentials, Row, NUM_LABELS};
pub use train::{
    chunk_ranges, nll_and_gradient, train, train_dataset, CompiledSequence, Dataset,
    DatasetBuilder, TrainingReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// L1 coefficient.
    pub c1: f64,
    /// Squared-L2 coefficient.
    pub c2: f64,
    pub max_iterations: usize,
    pub lbfgs_memory: usize,
    /// Relative objective change below which training stops.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            c1: 1.0,
            c2: 1e-3,
            max_iterations: 100,
            lbfgs_memory: 10,
            convergence_tol: 1e-6,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 >= 0.0 && self.c1.is_finite()) {
            return Err(Error::Config(format!("c1 must be >= 0, got {}", self.c1)));
        }
        if !(self.c2 >= 0.0 && self.c2.is_finite()) {
            return Err(Error::Config(format!("c2 must be >= 0, got {}", self.c2)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if self.lbfgs_memory == 0 {
            return Err(Error::Config("lbfgs_memory must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub id: String,
    pub features: Vec<FeatureVector>,
    pub labels: LabelSequence,
}

impl LabeledSequence {
    pub fn new(
        id: impl Into<String>,
        features: Vec<FeatureVector>,
        labels: LabelSequence,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: labels.len(),
            });
        }
        if features.is_empty() {
            return Err(Error::Config("labeled sequence must be non-empty".into()));
        }
        Ok(LabeledSequence {
            id: id.into(),
            features,
            labels,
        })
    }
}

/// Attribute name and value for one feature entry.
pub fn binarize_entry(key: &str, value: &FeatureValue) -> (String, f64) {
    match value {
        FeatureValue::Bool(b) => (format!("{key}={b}"), 1.0),
        FeatureValue::Text(s) => (format!("{key}={s}"), 1.0),
        FeatureValue::Int(i) => (key.to_string(), *i as f64),
        FeatureValue::Real(r) => (key.to_string(), *r),
    }
}

pub fn binarize(features: &FeatureVector) -> Vec<(String, f64)> {
    features.iter().map(|(k, v)| binarize_entry(k, v)).collect()
}

/// All model weights, laid out per attribute plus the shared potentials.
/// Gradients use the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    /// `state[attribute][label]`
    pub state: Vec<Row>,
    pub potentials: Potentials,
}

impl Weights {
    pub fn zeros(num_attributes: usize) -> Self {
        Weights {
            state: vec![[0.0; NUM_LABELS]; num_attributes],
            potentials: Potentials::default(),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.state.len() * NUM_LABELS + NUM_LABELS * NUM_LABELS + 2 * NUM_LABELS
    }

    /// Flat layout: state weights attribute-major, then transitions row-major
    /// (`prev * 5 + next`), then start, then end.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_parameters());
        for row in &self.state {
            v.extend_from_slice(row);
        }
        for row in &self.potentials.transitions {
            v.extend_from_slice(row);
        }
        v.extend_from_slice(&self.potentials.start);
        v.extend_from_slice(&self.potentials.end);
        v
    }

    pub fn from_flat(num_attributes: usize, flat: &[f64]) -> Result<Self> {
        let mut w = Weights::zeros(num_attributes);
        if flat.len() != w.num_parameters() {
            return Err(Error::LengthMismatch {
                left: flat.len(),
                right: w.num_parameters(),
            });
        }
        let mut chunks = flat.chunks_exact(NUM_LABELS);
        for row in w.state.iter_mut() {
            row.copy_from_slice(chunks.next().unwrap());
        }
        for row in w.potentials.transitions.iter_mut() {
            row.copy_from_slice(chunks.next().unwrap());
        }
        w.potentials.start.copy_from_slice(chunks.next().unwrap());
        w.potentials.end.copy_from_slice(chunks.next().unwrap());
        Ok(w)
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub format_version: u32,
    pub c1: f64,
    pub c2: f64,
    pub max_iterations: usize,
    pub iterations_run: usize,
    pub seed: u64,
    pub corpus_fingerprint: String,
    #[serde(default)]
    pub stop_reason: String,
    /// Free-form provenance such as the training filter.
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

impl Default for ModelMetadata {
    fn default() -> Self {
        let config = TrainingConfig::default();
        ModelMetadata {
            format_version: FORMAT_VERSION,
            c1: config.c1,
            c2: config.c2,
            max_iterations: config.max_iterations,
            iterations_run: 0,
            seed: config.seed,
            corpus_fingerprint: String::new(),
            stop_reason: String::new(),
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    attributes: Vec<String>,
    index: HashMap<String, usize>,
    pub weights: Weights,
    pub metadata: ModelMetadata,
}

impl CrfModel {
    /// A zero-weight model over the given attributes (sorted and deduplicated).
    pub fn new(mut attributes: Vec<String>) -> Self {
        attributes.sort();
        attributes.dedup();
        let weights = Weights::zeros(attributes.len());
        Self::from_parts(attributes, weights, ModelMetadata::default())
    }

    /// `attributes` must be sorted and unique, one weight row each.
    pub(crate) fn from_parts(
        attributes: Vec<String>,
        weights: Weights,
        metadata: ModelMetadata,
    ) -> Self {
        debug_assert_eq!(attributes.len(), weights.state.len());
        let index = attributes
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        CrfModel {
            attributes,
            index,
            weights,
            metadata,
        }
    }

    pub fn labels(&self) -> &'static [Label] {
        &Label::ALL
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn state_weight(&self, attribute: &str, label: Label) -> f64 {
        self.attribute_index(attribute)
            .map_or(0.0, |a| self.weights.state[a][label.index()])
    }

    /// Sets a state weight; returns false for an unknown attribute.
    pub fn set_state_weight(&mut self, attribute: &str, label: Label, w: f64) -> bool {
        match self.attribute_index(attribute) {
            Some(a) => {
                self.weights.state[a][label.index()] = w;
                true
            }
            None => false,
        }
    }

    pub fn potentials(&self) -> &Potentials {
        &self.weights.potentials
    }

    pub fn potentials_mut(&mut self) -> &mut Potentials {
        &mut self.weights.potentials
    }

    /// Attribute ids and values per position; unknown attributes are dropped.
    pub fn compile(&self, features: &[FeatureVector]) -> Vec<Vec<(usize, f64)>> {
        features
            .iter()
            .map(|fv| {
                fv.iter()
                    .filter_map(|(k, v)| {
                        let (name, value) = binarize_entry(k, v);
                        self.index.get(&name).map(|&a| (a, value))
                    })
                    .collect()
            })
            .collect()
    }

    pub fn emissions_compiled(&self, positions: &[Vec<(usize, f64)>]) -> Vec<Row> {
        positions
            .iter()
            .map(|attrs| {
                let mut row = [0.0; NUM_LABELS];
                for &(a, v) in attrs {
                    let w = &self.weights.state[a];
                    for y in 0..NUM_LABELS {
                        row[y] += w[y] * v;
                    }
                }
                row
            })
            .collect()
    }

    /// Per-position state scores for every label.
    pub fn emissions(&self, features: &[FeatureVector]) -> Vec<Row> {
        self.emissions_compiled(&self.compile(features))
    }

    pub fn score(&self, features: &[FeatureVector], labels: &LabelSequence) -> Result<f64> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: labels.len(),
            });
        }
        let path: Vec<usize> = labels.iter().map(|l| l.index()).collect();
        Ok(lattice::path_score(
            &self.emissions(features),
            &self.weights.potentials,
            &path,
        ))
    }

    pub fn log_partition(&self, features: &[FeatureVector]) -> Result<f64> {
        non_empty(features)?;
        Ok(lattice::log_partition(
            &self.emissions(features),
            &self.weights.potentials,
        ))
    }

    pub fn marginals(&self, features: &[FeatureVector]) -> Result<Marginals> {
        non_empty(features)?;
        Ok(lattice::marginals(
            &self.emissions(features),
            &self.weights.potentials,
        ))
    }

    pub fn viterbi(&self, features: &[FeatureVector]) -> Result<LabelSequence> {
        non_empty(features)?;
        Ok(self.viterbi_emissions(&self.emissions(features)))
    }

    pub fn viterbi_emissions(&self, emissions: &[Row]) -> LabelSequence {
        LabelSequence(
            lattice::viterbi(emissions, &self.weights.potentials)
                .into_iter()
                .map(|i| Label::ALL[i])
                .collect(),
        )
    }

    /// Drops attributes whose weights are all zero.
    pub fn prune(&mut self) {
        let keep: Vec<usize> = (0..self.attributes.len())
            .filter(|&a| self.weights.state[a].iter().any(|&w| w != 0.0))
            .collect();
        if keep.len() == self.attributes.len() {
            return;
        }
        let attributes: Vec<String> = keep.iter().map(|&a| self.attributes[a].clone()).collect();
        let state = keep.iter().map(|&a| self.weights.state[a]).collect();
        let weights = Weights {
            state,
            potentials: self.weights.potentials,
        };
        *self = Self::from_parts(attributes, weights, self.metadata.clone());
    }

    /// Number of non-zero weights.
    pub fn active_weights(&self) -> usize {
        self.weights.to_flat().iter().filter(|w| **w != 0.0).count()
    }
}

fn non_empty(features: &[FeatureVector]) -> Result<()> {
    if features.is_empty() {
        Err(Error::Config("sequence must be non-empty".into()))
    } else {
        Ok(())
    }
}
