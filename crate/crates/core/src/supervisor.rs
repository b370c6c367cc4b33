//! Regression network mapping a descriptor to the expected number of
//! correct ensemble members: `n → n+1 → 2n+1 → 1` with ReLU hidden layers
//! and a linear output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::numerics::matrix::{affine, affine_backward};
use crate::numerics::{adam_step, AdamState, Matrix, SeededRng};
use crate::trust_loss::TrustMemory;

/// Minibatch adam settings. Defaults: lr 0.01, 64 samples, 200 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            minibatch: 64,
            epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.minibatch == 0 {
            return Err(Error::InvalidArgument(
                "learning rate and minibatch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Offsets of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    rows: usize,
    cols: usize,
    w: usize,
    b: usize,
}

impl Dense {
    fn new(rows: usize, cols: usize, offset: usize) -> Self {
        Self {
            rows,
            cols,
            w: offset,
            b: offset + rows * cols,
        }
    }

    fn end(&self) -> usize {
        self.b + self.rows
    }

    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.b]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.end()]
    }

    fn grads<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        let (w, b) = g[self.w..self.end()].split_at_mut(self.rows * self.cols);
        (w, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    l1: Dense,
    l2: Dense,
    out: Dense,
}

impl Layout {
    fn new(n: usize) -> Self {
        let l1 = Dense::new(n + 1, n, 0);
        let l2 = Dense::new(2 * n + 1, n + 1, l1.end());
        let out = Dense::new(1, 2 * n + 1, l2.end());
        Self { l1, l2, out }
    }

    fn len(&self) -> usize {
        self.out.end()
    }
}

/// Activations kept from a forward pass for backprop.
#[derive(Debug, Clone)]
struct Cache {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    d2: Vec<f64>,
    d1: Vec<f64>,
}

impl Cache {
    fn new(layout: &Layout) -> Self {
        let h1 = layout.l1.rows;
        let h2 = layout.l2.rows;
        Self {
            z1: vec![0.0; h1],
            a1: vec![0.0; h1],
            z2: vec![0.0; h2],
            a2: vec![0.0; h2],
            d2: vec![0.0; h2],
            d1: vec![0.0; h1],
        }
    }
}

/// The supervisor network and its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisorNet {
    input: usize,
    layout: Layout,
    params: Vec<f64>,
    optimizer: AdamState,
}

/// Per-epoch results of [`SupervisorNet::train`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Epoch SSE divided by the sample count.
    pub loss_trace: Vec<f64>,
}

impl SupervisorNet {
    /// He-uniform weights scaled by fan-in, zero biases.
    pub fn new(input: usize, seed: u64) -> Result<Self> {
        if input == 0 {
            return Err(Error::InvalidArgument("descriptor length must be positive".into()));
        }
        let layout = Layout::new(input);
        let mut params = vec![0.0; layout.len()];
        let mut rng = SeededRng::new(seed);
        for layer in [layout.l1, layout.l2, layout.out] {
            let bound = (6.0 / layer.cols as f64).sqrt();
            for w in &mut params[layer.w..layer.b] {
                *w = rng.uniform_range(-bound, bound);
            }
        }
        Ok(Self {
            input,
            layout,
            optimizer: AdamState::new(params.len(), TrainConfig::default().learning_rate),
            params,
        })
    }

    /// Network with every weight and bias set to zero.
    pub fn zeros(input: usize) -> Result<Self> {
        let mut net = Self::new(input, 0)?;
        net.params.iter_mut().for_each(|p| *p = 0.0);
        Ok(net)
    }

    pub fn input_len(&self) -> usize {
        self.input
    }

    pub fn hidden_sizes(&self) -> (usize, usize) {
        (self.layout.l1.rows, self.layout.l2.rows)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.optimizer
    }

    pub fn set_output_bias(&mut self, bias: f64) {
        self.params[self.layout.out.b] = bias;
    }

    /// Sets one first-layer bias; mostly useful for probing dead units.
    pub fn set_hidden1_bias(&mut self, unit: usize, bias: f64) {
        self.params[self.layout.l1.b + unit] = bias;
    }

    /// Range of the flat parameter vector holding first-layer weights of
    /// `unit`.
    pub fn hidden1_weight_range(&self, unit: usize) -> std::ops::Range<usize> {
        let l1 = self.layout.l1;
        l1.w + unit * l1.cols..l1.w + (unit + 1) * l1.cols
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input {
            return Err(Error::Shape(format!(
                "descriptor of length {} for a supervisor expecting {}",
                x.len(),
                self.input
            )));
        }
        Ok(())
    }

    fn forward_with(&self, params: &[f64], x: &[f64], cache: &mut Cache) -> f64 {
        let Layout { l1, l2, out } = self.layout;
        affine(l1.weights(params), l1.bias(params), x, &mut cache.z1);
        for (a, &z) in cache.a1.iter_mut().zip(&cache.z1) {
            *a = z.max(0.0);
        }
        affine(l2.weights(params), l2.bias(params), &cache.a1, &mut cache.z2);
        for (a, &z) in cache.a2.iter_mut().zip(&cache.z2) {
            *a = z.max(0.0);
        }
        let mut y = [0.0];
        affine(out.weights(params), out.bias(params), &cache.a2, &mut y);
        y[0]
    }

    /// Predicted number of correct members; unclamped.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut cache = Cache::new(&self.layout);
        Ok(self.forward_with(&self.params, x, &mut cache))
    }

    pub fn predict_batch(&self, xs: &Matrix) -> Result<Vec<f64>> {
        if xs.cols() != self.input {
            return Err(Error::Shape(format!(
                "descriptor matrix has {} columns, supervisor expects {}",
                xs.cols(),
                self.input
            )));
        }
        let mut cache = Cache::new(&self.layout);
        Ok((0..xs.rows())
            .map(|i| self.forward_with(&self.params, xs.row(i), &mut cache))
            .collect())
    }

    /// Adds the gradient of `(y - label)^2` for one sample to `grad` and
    /// returns `y`.
    fn accumulate_gradient(&self, x: &[f64], label: f64, cache: &mut Cache, grad: &mut [f64]) -> f64 {
        let Layout { l1, l2, out } = self.layout;
        let p = &self.params;
        let y = self.forward_with(p, x, cache);
        let dy = 2.0 * (y - label);

        {
            let (gw, gb) = out.grads(grad);
            affine_backward(out.weights(p), &cache.a2, &[dy], gw, gb, Some(&mut cache.d2));
        }
        for (d, &z) in cache.d2.iter_mut().zip(&cache.z2) {
            if z <= 0.0 {
                *d = 0.0;
            }
        }
        {
            let (gw, gb) = l2.grads(grad);
            affine_backward(l2.weights(p), &cache.a1, &cache.d2, gw, gb, Some(&mut cache.d1));
        }
        for (d, &z) in cache.d1.iter_mut().zip(&cache.z1) {
            if z <= 0.0 {
                *d = 0.0;
            }
        }
        let (gw, gb) = l1.grads(grad);
        affine_backward(l1.weights(p), x, &cache.d1, gw, gb, None);
        y
    }

    /// Analytic gradient of the single-sample squared error.
    pub fn gradient(&self, x: &[f64], label: f64) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut grad = vec![0.0; self.params.len()];
        let mut cache = Cache::new(&self.layout);
        self.accumulate_gradient(x, label, &mut cache, &mut grad);
        Ok(grad)
    }

    /// Single-sample squared error evaluated at an arbitrary parameter
    /// vector.
    pub fn loss_at(&self, params: &[f64], x: &[f64], label: f64) -> f64 {
        let mut cache = Cache::new(&self.layout);
        let y = self.forward_with(params, x, &mut cache);
        (y - label) * (y - label)
    }

    /// Minibatch adam on the summed squared error.
    ///
    /// When a memory is attached, each minibatch's `(y, label)` pairs are
    /// pushed into it (with `y` from the pre-update forward pass) and the
    /// threshold takes one optimizer step.
    pub fn train(
        &mut self,
        descriptors: &Matrix,
        labels: &[f64],
        cfg: &TrainConfig,
        mut memory: Option<&mut TrustMemory>,
    ) -> Result<TrainReport> {
        cfg.validate()?;
        if descriptors.rows() == 0 {
            return Err(Error::Empty("supervisor training set".into()));
        }
        if descriptors.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} descriptors but {} labels",
                descriptors.rows(),
                labels.len()
            )));
        }
        self.check_input(descriptors.row(0))?;
        self.optimizer.learning_rate = cfg.learning_rate;

        let n = descriptors.rows();
        let mut rng = SeededRng::new(cfg.seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut grad = vec![0.0; self.params.len()];
        let mut cache = Cache::new(&self.layout);
        let mut batch_pairs = Vec::with_capacity(cfg.minibatch);
        let mut report = TrainReport::default();

        for epoch in 0..cfg.epochs {
            rng.shuffle(&mut order);
            let mut epoch_sse = 0.0;
            for batch in order.chunks(cfg.minibatch) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                batch_pairs.clear();
                for &i in batch {
                    let y = self.accumulate_gradient(descriptors.row(i), labels[i], &mut cache, &mut grad);
                    epoch_sse += (y - labels[i]) * (y - labels[i]);
                    batch_pairs.push((y, labels[i]));
                }
                if !epoch_sse.is_finite() {
                    return Err(Error::Diverged { epoch, loss: epoch_sse });
                }
                adam_step(&mut self.params, &grad, &mut self.optimizer)?;
                if let Some(mem) = memory.as_deref_mut() {
                    for &(y, l) in &batch_pairs {
                        mem.push(y, l)?;
                    }
                    mem.update_tt(1)?;
                }
            }
            report.loss_trace.push(epoch_sse / n as f64);
        }
        Ok(report)
    }

    /// Largest relative disagreement between backprop and central
    /// differences (step 1e-6) over every parameter.
    ///
    /// Relative error is `|a - f| / max(|a|, |f|, 1e-3)`. Central
    /// differences at this step carry round-off of order `1e-16·loss/1e-6`,
    /// so components below the floor are compared absolutely.
    pub fn grad_check(&self, x: &[f64], label: f64) -> Result<f64> {
        let analytic = self.gradient(x, label)?;
        let h = 1e-6;
        let mut probe = self.params.clone();
        let mut worst: f64 = 0.0;
        for (i, &a) in analytic.iter().enumerate() {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = self.loss_at(&probe, x, label);
            probe[i] = orig - h;
            let down = self.loss_at(&probe, x, label);
            probe[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_CHECK_FLOOR);
            worst = worst.max(rel);
        }
        Ok(worst)
    }

    pub fn to_checkpoint(&self) -> SupervisorCheckpoint {
        let p = &self.params;
        let layer = |name: &str, d: Dense| LayerRecord {
            name: name.to_string(),
            rows: d.rows,
            cols: d.cols,
            weights: d.weights(p).to_vec(),
            bias: d.bias(p).to_vec(),
        };
        SupervisorCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            input: self.input,
            layers: vec![
                layer("hidden1", self.layout.l1),
                layer("hidden2", self.layout.l2),
                layer("output", self.layout.out),
            ],
            optimizer: OptimizerRecord::from(&self.optimizer),
        }
    }

    pub fn from_checkpoint(ck: SupervisorCheckpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "unknown checkpoint format {}",
                ck.format
            )));
        }
        let layout = Layout::new(ck.input);
        let expected = [layout.l1, layout.l2, layout.out];
        if ck.layers.len() != expected.len() {
            return Err(Error::Shape("checkpoint must hold three layers".into()));
        }
        let mut params = Vec::with_capacity(layout.len());
        for (rec, d) in ck.layers.iter().zip(expected) {
            if rec.rows != d.rows
                || rec.cols != d.cols
                || rec.weights.len() != d.rows * d.cols
                || rec.bias.len() != d.rows
            {
                return Err(Error::Shape(format!(
                    "layer {} does not match input {}",
                    rec.name, ck.input
                )));
            }
            params.extend_from_slice(&rec.weights);
            params.extend_from_slice(&rec.bias);
        }
        let optimizer = ck.optimizer.into_state();
        if optimizer.len() != params.len() {
            return Err(Error::Shape("optimizer moments do not match parameters".into()));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(Self {
            input: ck.input,
            layout,
            params,
            optimizer,
        })
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

/// Summed squared error.
pub fn sse_loss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    Ok(predictions.iter().zip(labels).map(|(y, e)| (y - e) * (y - e)).sum())
}

/// Gradient magnitude below which [`SupervisorNet::grad_check`] compares
/// absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-3;

pub const CHECKPOINT_FORMAT: &str = "trustsup-supervisor/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(with = "codec")]
    pub weights: Vec<f64>,
    #[serde(with = "codec")]
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerRecord {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    #[serde(with = "codec")]
    pub first_moment: Vec<f64>,
    #[serde(with = "codec")]
    pub second_moment: Vec<f64>,
}

impl From<&AdamState> for OptimizerRecord {
    fn from(s: &AdamState) -> Self {
        Self {
            step: s.step,
            learning_rate: s.learning_rate,
            beta1: s.beta1,
            beta2: s.beta2,
            epsilon: s.epsilon,
            first_moment: s.first_moment.clone(),
            second_moment: s.second_moment.clone(),
        }
    }
}

impl OptimizerRecord {
    pub fn into_state(self) -> AdamState {
        AdamState {
            step: self.step,
            first_moment: self.first_moment,
            second_moment: self.second_moment,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// JSON checkpoint: layer shapes plus base64-encoded raw weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisorCheckpoint {
    pub format: String,
    pub input: usize,
    pub layers: Vec<LayerRecord>,
    pub optimizer: OptimizerRecord,
}
