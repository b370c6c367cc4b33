//! Sources of ensemble softmax outputs.
//!
//! * [`synth`]: Dirichlet-based activation generator with a controlled
//!   number of correct members per sample.
//! * [`world`] and [`toy`]: Gaussian feature data and a small retrainable
//!   ensemble, enough to run the active-learning loop end to end.
//! * [`io`]: CSV dumps of activations and features.

pub mod io;
pub mod synth;
pub mod toy;
pub mod world;

use serde::{Deserialize, Serialize};

use crate::descriptor::SoftmaxMatrix;

/// Ensemble response to one input, with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sample_id: String,
    pub activations: SoftmaxMatrix,
    pub true_class: usize,
    /// Session the sample belongs to, if the stream is structured.
    pub group_id: Option<String>,
}

/// Number of members whose argmax is the true class.
pub fn correct_count(sample: &LabeledSample) -> usize {
    let x = &sample.activations;
    (0..x.models()).filter(|&m| x.argmax(m) == sample.true_class).count()
}

/// Histogram of correct counts, indexed `0..=M`.
pub fn correct_count_histogram(samples: &[LabeledSample], models: usize) -> Vec<usize> {
    let mut h = vec![0; models + 1];
    for s in samples {
        h[correct_count(s).min(models)] += 1;
    }
    h
}

pub use synth::{grouped_stream, synth_generate, GroupProfile, Split, SynthConfig};
pub use toy::{ToyConfig, ToyEnsemble};
pub use world::{FeatureSample, FeatureWorld, WorldConfig};
