//! Uncertainty shape descriptors.
//!
//! A descriptor rewrites an ensemble's `M × C` softmax matrix into a
//! class-invariant vector of length `M·C`:
//!
//! 1. the *leading* model is the one holding the globally largest
//!    activation;
//! 2. the class permutation sorts the leading model's activations in
//!    descending order;
//! 3. that single permutation is applied to every model's vector, so
//!    columns stay aligned across models;
//! 4. model blocks are ordered by their own maximum activation,
//!    descending;
//! 5. the blocks are flattened in that order.
//!
//! Ties are broken by ascending original index, both for classes and for
//! models.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Maximum deviation of a softmax row sum from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Per-model class probability vectors of one sample, row-major `M × C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxMatrix {
    models: usize,
    classes: usize,
    data: Vec<f64>,
}

impl SoftmaxMatrix {
    /// Validates that every row lies on the probability simplex.
    pub fn new(models: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if models == 0 || classes == 0 {
            return Err(Error::Shape(format!(
                "softmax matrix needs at least one model and class, got {models}x{classes}"
            )));
        }
        if data.len() != models * classes {
            return Err(Error::Shape(format!(
                "{} activations for {models} models x {classes} classes",
                data.len()
            )));
        }
        for (row, chunk) in data.chunks(classes).enumerate() {
            if chunk.iter().any(|v| v.is_nan()) {
                return Err(Error::NonFinite(format!("NaN activation in row {row}")));
            }
            let sum: f64 = chunk.iter().sum();
            let in_range = chunk.iter().all(|&v| (0.0..=1.0).contains(&v));
            if !in_range || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::OffSimplex { row, sum });
            }
        }
        Ok(Self { models, classes, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != classes) {
            return Err(Error::Shape(format!("row {bad} has a different class count")));
        }
        Self::new(rows.len(), classes, rows.concat())
    }

    pub fn models(&self) -> usize {
        self.models
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, model: usize) -> &[f64] {
        &self.data[model * self.classes..(model + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.classes)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Predicted class of one model; ties go to the lowest class index.
    pub fn argmax(&self, model: usize) -> usize {
        argmax_first(self.row(model))
    }

    pub fn shape(&self) -> DescriptorShape {
        DescriptorShape {
            models: self.models,
            classes: self.classes,
        }
    }
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Ensemble size and class count; the descriptor length is their product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorShape {
    pub models: usize,
    pub classes: usize,
}

impl DescriptorShape {
    pub fn len(&self) -> usize {
        self.models * self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flattened, class-normalised view of a [`SoftmaxMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyDescriptor {
    pub values: Vec<f64>,
    /// `model_order[k]` is the original index of the model in block `k`.
    pub model_order: Vec<usize>,
    /// `class_perm[j]` is the original class shown at position `j` of
    /// every block.
    pub class_perm: Vec<usize>,
}

impl UncertaintyDescriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn desc_then_index(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Builds the descriptor of one sample.
///
/// The matrix type already guarantees simplex rows, so this cannot fail.
pub fn build_usd(activations: &SoftmaxMatrix) -> UncertaintyDescriptor {
    let m = activations.models();
    let c = activations.classes();

    let row_max: Vec<f64> = activations
        .rows()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();

    let mut model_order: Vec<usize> = (0..m).collect();
    model_order.sort_by(|&a, &b| desc_then_index((a, row_max[a]), (b, row_max[b])));
    let leading = activations.row(model_order[0]);

    let mut class_perm: Vec<usize> = (0..c).collect();
    class_perm.sort_by(|&a, &b| desc_then_index((a, leading[a]), (b, leading[b])));

    let mut values = Vec::with_capacity(m * c);
    for &model in &model_order {
        let row = activations.row(model);
        values.extend(class_perm.iter().map(|&k| row[k]));
    }
    UncertaintyDescriptor {
        values,
        model_order,
        class_perm,
    }
}

/// Stacks the descriptors of `samples` into a `len × M·C` matrix.
pub fn usd_batch(samples: &[SoftmaxMatrix], shape: DescriptorShape) -> Result<Matrix> {
    let mut out = Matrix::zeros(0, shape.len());
    for (i, s) in samples.iter().enumerate() {
        if s.shape() != shape {
            return Err(Error::Shape(format!(
                "sample {i} is {}x{}, batch expects {}x{}",
                s.models(),
                s.classes(),
                shape.models,
                shape.classes
            )));
        }
        out.push_row(&build_usd(s).values)?;
    }
    Ok(out)
}
