//! Glue between datasets, the supervisor and its memory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::descriptor::{usd_batch, DescriptorShape, SoftmaxMatrix};
use crate::ensemble::{correct_count, LabeledSample};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, Matrix, SeededRng};
use crate::supervisor::{SupervisorCheckpoint, SupervisorNet, TrainConfig, TrainReport};
use crate::trust_loss::{TrustMemory, TrustMemorySnapshot, DEFAULT_CAPACITY};

/// Memory settings. The threshold starts at `M / 2` unless overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustConfig {
    pub capacity: usize,
    pub initial_tt: Option<f64>,
    pub learning_rate: f64,
}

impl Default for TrustConfig {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            initial_tt: None,
            learning_rate: 0.01,
        }
    }
}

impl TrustConfig {
    pub fn build(&self, models: usize) -> Result<TrustMemory> {
        let tt = self.initial_tt.unwrap_or(models as f64 / 2.0);
        TrustMemory::new(self.capacity, tt, self.learning_rate)
    }
}

/// Descriptors and correct-count labels of a labelled dataset.
pub fn descriptors_and_labels(samples: &[LabeledSample], shape: DescriptorShape) -> Result<(Matrix, Vec<f64>)> {
    let acts: Vec<SoftmaxMatrix> = samples.iter().map(|s| s.activations.clone()).collect();
    let x = usd_batch(&acts, shape)?;
    let labels = samples.iter().map(|s| correct_count(s) as f64).collect();
    Ok((x, labels))
}

/// Retained slice of the supervisor's training data used for online
/// retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSet {
    pub rows: usize,
    pub cols: usize,
    #[serde(with = "codec")]
    pub descriptors: Vec<f64>,
    #[serde(with = "codec")]
    pub labels: Vec<f64>,
}

impl ReferenceSet {
    /// Seeded subset of `size` rows (all rows if fewer).
    pub fn sample(x: &Matrix, labels: &[f64], size: usize, seed: u64) -> Self {
        let k = size.min(x.rows());
        let mut rng = SeededRng::new(seed);
        let idx = rng.sample_indices(x.rows(), k);
        Self {
            rows: k,
            cols: x.cols(),
            descriptors: x.select_rows(&idx).into_vec(),
            labels: idx.iter().map(|&i| labels[i]).collect(),
        }
    }

    pub fn matrix(&self) -> Result<Matrix> {
        Matrix::from_vec(self.rows, self.cols, self.descriptors.clone())
    }
}

/// A trained supervisor with everything needed to evaluate or keep
/// learning online.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSupervisor {
    pub shape: DescriptorShape,
    pub net: SupervisorNet,
    pub memory: TrustMemory,
    pub reference: ReferenceSet,
}

/// Trains a fresh supervisor with the trust memory attached.
pub fn train_supervisor(
    samples: &[LabeledSample],
    shape: DescriptorShape,
    train: &TrainConfig,
    trust: &TrustConfig,
) -> Result<(TrainedSupervisor, TrainReport)> {
    if samples.is_empty() {
        return Err(Error::Empty("supervisor training set".into()));
    }
    let (x, labels) = descriptors_and_labels(samples, shape)?;
    let mut net = SupervisorNet::new(shape.len(), derive_seed(train.seed, 1))?;
    let mut memory = trust.build(shape.models)?;
    let report = net.train(&x, &labels, train, Some(&mut memory))?;
    let reference = ReferenceSet::sample(&x, &labels, train.minibatch, derive_seed(train.seed, 2));
    Ok((
        TrainedSupervisor {
            shape,
            net,
            memory,
            reference,
        },
        report,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedSupervisorFile {
    pub models: usize,
    pub classes: usize,
    pub supervisor: SupervisorCheckpoint,
    pub memory: TrustMemorySnapshot,
    pub reference: ReferenceSet,
}

impl TrainedSupervisor {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = TrainedSupervisorFile {
            models: self.shape.models,
            classes: self.shape.classes,
            supervisor: self.net.to_checkpoint(),
            memory: self.memory.to_snapshot(),
            reference: self.reference.clone(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TrainedSupervisorFile = serde_json::from_str(&text)?;
        let shape = DescriptorShape {
            models: file.models,
            classes: file.classes,
        };
        let net = SupervisorNet::from_checkpoint(file.supervisor)?;
        if net.input_len() != shape.len() || file.reference.cols != shape.len() {
            return Err(Error::Shape("supervisor file shape is inconsistent".into()));
        }
        Ok(Self {
            shape,
            net,
            memory: TrustMemory::from_snapshot(file.memory)?,
            reference: file.reference,
        })
    }
}
