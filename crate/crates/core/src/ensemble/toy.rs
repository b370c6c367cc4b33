//! A small ensemble of one-hidden-layer softmax classifiers.
//!
//! Members differ only in their initialisation and shuffling seeds. The
//! ensemble keeps a reference set `D_r` of `reference_size` training
//! samples; an oracle answer replaces one random element of `D_r` and all
//! members are briefly retrained on it.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::world::FeatureSample;
use super::LabeledSample;
use crate::codec;
use crate::descriptor::SoftmaxMatrix;
use crate::error::{Error, Result};
use crate::numerics::matrix::{affine, affine_backward};
use crate::numerics::{adam_step, derive_seed, AdamState, SeededRng};
use crate::supervisor::OptimizerRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub features: usize,
    pub classes: usize,
    pub models: usize,
    pub hidden: usize,
    /// Size of `D_r`; matches the supervisor minibatch by default.
    pub reference_size: usize,
    pub learning_rate: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            features: 8,
            classes: 5,
            models: 7,
            hidden: 16,
            reference_size: 64,
            learning_rate: 0.01,
            minibatch: 16,
            epochs: 20,
            seed: 0,
        }
    }
}

impl ToyConfig {
    fn validate(&self) -> Result<()> {
        if self.features == 0 || self.classes < 2 || self.models == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument(
                "toy ensemble dimensions must be positive".into(),
            ));
        }
        if self.reference_size == 0 || self.minibatch == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "reference size, minibatch and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Member {
    features: usize,
    hidden: usize,
    classes: usize,
    params: Vec<f64>,
    optimizer: AdamState,
}

impl Member {
    fn new(cfg: &ToyConfig, seed: u64) -> Self {
        let (d, h, c) = (cfg.features, cfg.hidden, cfg.classes);
        let len = h * d + h + c * h + c;
        let mut params = vec![0.0; len];
        let mut rng = SeededRng::new(seed);
        let b1 = (6.0 / d as f64).sqrt();
        for w in &mut params[..h * d] {
            *w = rng.uniform_range(-b1, b1);
        }
        let b2 = (6.0 / h as f64).sqrt();
        for w in &mut params[h * d + h..h * d + h + c * h] {
            *w = rng.uniform_range(-b2, b2);
        }
        Self {
            features: d,
            hidden: h,
            classes: c,
            params,
            optimizer: AdamState::new(len, cfg.learning_rate),
        }
    }

    fn split(&self) -> (usize, usize, usize) {
        let w1 = self.hidden * self.features;
        let b1 = w1 + self.hidden;
        let w2 = b1 + self.classes * self.hidden;
        (w1, b1, w2)
    }

    fn forward(&self, x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        let (w1, b1, w2) = self.split();
        let p = &self.params;
        affine(&p[..w1], &p[w1..b1], x, hidden);
        hidden.iter_mut().for_each(|v| *v = v.max(0.0));
        affine(&p[b1..w2], &p[w2..], hidden, out);
        softmax_in_place(out);
    }

    fn train(&mut self, data: &[&FeatureSample], epochs: usize, minibatch: usize, seed: u64) -> Result<()> {
        let (w1, b1, w2) = self.split();
        let mut rng = SeededRng::new(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut grad = vec![0.0; self.params.len()];
        let mut z1 = vec![0.0; self.hidden];
        let mut probs = vec![0.0; self.classes];
        let mut d1 = vec![0.0; self.hidden];
        for _ in 0..epochs {
            rng.shuffle(&mut order);
            for batch in order.chunks(minibatch) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &i in batch {
                    let s = data[i];
                    let p = &self.params;
                    affine(&p[..w1], &p[w1..b1], &s.features, &mut z1);
                    let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
                    affine(&p[b1..w2], &p[w2..], &a1, &mut probs);
                    softmax_in_place(&mut probs);
                    // Cross-entropy gradient with respect to the logits.
                    probs[s.true_class] -= 1.0;
                    let scale = 1.0 / batch.len() as f64;
                    probs.iter_mut().for_each(|v| *v *= scale);
                    let (g_first, g_second) = grad.split_at_mut(b1);
                    let (gw2, gb2) = g_second.split_at_mut(w2 - b1);
                    affine_backward(&p[b1..w2], &a1, &probs, gw2, gb2, Some(&mut d1));
                    for (d, &z) in d1.iter_mut().zip(&z1) {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    let (gw1, gb1) = g_first.split_at_mut(w1);
                    affine_backward(&p[..w1], &s.features, &d1, gw1, gb1, None);
                }
                adam_step(&mut self.params, &grad, &mut self.optimizer)?;
            }
        }
        Ok(())
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEnsemble {
    config: ToyConfig,
    members: Vec<Member>,
    reference: Vec<FeatureSample>,
    updates: u64,
}

impl ToyEnsemble {
    pub fn new(config: ToyConfig) -> Result<Self> {
        config.validate()?;
        let members = (0..config.models)
            .map(|m| Member::new(&config, derive_seed(config.seed, 1000 + m as u64)))
            .collect();
        Ok(Self {
            config,
            members,
            reference: Vec::new(),
            updates: 0,
        })
    }

    /// Ensemble whose members have all-zero parameters.
    pub fn zeroed(config: ToyConfig) -> Result<Self> {
        let mut e = Self::new(config)?;
        for m in &mut e.members {
            m.params.iter_mut().for_each(|p| *p = 0.0);
        }
        Ok(e)
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn reference(&self) -> &[FeatureSample] {
        &self.reference
    }

    pub fn oracle_updates(&self) -> u64 {
        self.updates
    }

    /// Flat parameters of member `m`.
    pub fn member_params(&self, m: usize) -> &[f64] {
        &self.members[m].params
    }

    fn check_sample(&self, s: &FeatureSample) -> Result<()> {
        if s.features.len() != self.config.features {
            return Err(Error::Shape(format!(
                "sample {} has {} features, ensemble expects {}",
                s.sample_id,
                s.features.len(),
                self.config.features
            )));
        }
        if s.true_class >= self.config.classes {
            return Err(Error::InvalidArgument(format!(
                "sample {} has class {} outside 0..{}",
                s.sample_id, s.true_class, self.config.classes
            )));
        }
        Ok(())
    }

    fn train_members(&mut self, data: &[&FeatureSample], epochs: usize, round: u64) -> Result<()> {
        let seed = self.config.seed;
        let minibatch = self.config.minibatch;
        self.members
            .par_iter_mut()
            .enumerate()
            .map(|(m, member)| {
                let s = derive_seed(derive_seed(seed, 2000 + m as u64), round);
                member.train(data, epochs, minibatch, s)
            })
            .collect::<Result<Vec<()>>>()?;
        Ok(())
    }

    /// Trains every member on `data` and samples `D_r` without replacement.
    pub fn train(&mut self, data: &[FeatureSample], epochs: usize) -> Result<()> {
        if data.len() < self.config.reference_size {
            return Err(Error::InvalidArgument(format!(
                "{} training samples cannot fill a reference set of {}",
                data.len(),
                self.config.reference_size
            )));
        }
        for s in data {
            self.check_sample(s)?;
        }
        let refs: Vec<&FeatureSample> = data.iter().collect();
        self.train_members(&refs, epochs, 0)?;
        let mut rng = SeededRng::new(derive_seed(self.config.seed, 3000));
        self.reference = rng
            .sample_indices(data.len(), self.config.reference_size)
            .into_iter()
            .map(|i| data[i].clone())
            .collect();
        Ok(())
    }

    /// Per-member softmax outputs for one input.
    pub fn predict(&self, features: &[f64]) -> Result<SoftmaxMatrix> {
        if features.len() != self.config.features {
            return Err(Error::Shape(format!(
                "{} features for an ensemble expecting {}",
                features.len(),
                self.config.features
            )));
        }
        let mut hidden = vec![0.0; self.config.hidden];
        let mut data = vec![0.0; self.config.models * self.config.classes];
        for (member, out) in self.members.iter().zip(data.chunks_mut(self.config.classes)) {
            member.forward(features, &mut hidden, out);
        }
        SoftmaxMatrix::new(self.config.models, self.config.classes, data)
    }

    /// Runs the ensemble over feature samples, keeping ids and labels.
    pub fn label(&self, samples: &[FeatureSample]) -> Result<Vec<LabeledSample>> {
        samples
            .iter()
            .map(|s| {
                Ok(LabeledSample {
                    sample_id: s.sample_id.clone(),
                    activations: self.predict(&s.features)?,
                    true_class: s.true_class,
                    group_id: s.group_id.clone(),
                })
            })
            .collect()
    }

    /// Replaces a uniformly random element of `D_r` with the labelled
    /// sample and retrains every member on `D_r`. Returns the slot used.
    pub fn oracle_update(&mut self, sample: FeatureSample, epochs: usize) -> Result<usize> {
        self.check_sample(&sample)?;
        if self.reference.is_empty() {
            return Err(Error::InvalidArgument("reference set is empty; train first".into()));
        }
        self.updates += 1;
        let mut rng = SeededRng::new(derive_seed(derive_seed(self.config.seed, 4000), self.updates));
        let slot = rng.int_range(0, self.reference.len() - 1);
        self.reference[slot] = sample;
        let reference = std::mem::take(&mut self.reference);
        let refs: Vec<&FeatureSample> = reference.iter().collect();
        let result = self.train_members(&refs, epochs, self.updates);
        self.reference = reference;
        result.map(|_| slot)
    }

    pub fn to_checkpoint(&self) -> ToyCheckpoint {
        ToyCheckpoint {
            format: TOY_FORMAT.to_string(),
            config: self.config.clone(),
            members: self
                .members
                .iter()
                .map(|m| MemberRecord {
                    params: m.params.clone(),
                    optimizer: OptimizerRecord::from(&m.optimizer),
                })
                .collect(),
            reference: self.reference.clone(),
            updates: self.updates,
        }
    }

    pub fn from_checkpoint(ck: ToyCheckpoint) -> Result<Self> {
        if ck.format != TOY_FORMAT {
            return Err(Error::InvalidArgument(format!("unknown ensemble format {}", ck.format)));
        }
        let mut e = Self::new(ck.config)?;
        if ck.members.len() != e.members.len() {
            return Err(Error::Shape("member count does not match config".into()));
        }
        for (m, rec) in e.members.iter_mut().zip(ck.members) {
            if rec.params.len() != m.params.len() {
                return Err(Error::Shape("member parameter count".into()));
            }
            m.params = rec.params;
            m.optimizer = rec.optimizer.into_state();
        }
        e.reference = ck.reference;
        e.updates = ck.updates;
        Ok(e)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_checkpoint())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

pub const TOY_FORMAT: &str = "trustsup-toy-ensemble/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberRecord {
    #[serde(with = "codec")]
    pub params: Vec<f64>,
    pub optimizer: OptimizerRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyCheckpoint {
    pub format: String,
    pub config: ToyConfig,
    pub members: Vec<MemberRecord>,
    pub reference: Vec<FeatureSample>,
    pub updates: u64,
}
