//! Loss layer with memory.
//!
//! The memory keeps the most recent `K` pairs `(y_t, l_t)` of predicted and
//! true correct-member counts. The trust threshold `TT` is a learnable
//! scalar that minimises
//!
//! ```text
//! SSE_TT = Σ_t (y_t − TT)²   over entries where y_t and l_t lie strictly
//!                            on opposite sides of TT
//! ```
//!
//! Entries where `y_t = TT` or `l_t = TT` contribute nothing.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamState};

/// Default memory length.
pub const DEFAULT_CAPACITY: usize = 8192;

/// One recorded threshold state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtTracePoint {
    pub step: u64,
    pub tt: f64,
    pub sse_tt: f64,
    pub buffer_count: usize,
}

#[inline]
fn is_active(y: f64, l: f64, tt: f64) -> bool {
    (l < tt && y > tt) || (l > tt && y < tt)
}

/// `SSE_TT` over an arbitrary entry slice.
pub fn sse_tt_of(entries: impl IntoIterator<Item = (f64, f64)>, tt: f64) -> f64 {
    entries
        .into_iter()
        .filter(|&(y, l)| is_active(y, l, tt))
        .map(|(y, _)| (y - tt) * (y - tt))
        .sum()
}

/// FIFO memory of `(prediction, label)` pairs plus the learnable threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustMemory {
    capacity: usize,
    entries: VecDeque<(f64, f64)>,
    threshold: f64,
    optimizer: AdamState,
    trace: Vec<TtTracePoint>,
}

impl TrustMemory {
    pub fn new(capacity: usize, initial_tt: f64, learning_rate: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("memory capacity must be positive".into()));
        }
        if !initial_tt.is_finite() {
            return Err(Error::NonFinite("initial threshold".into()));
        }
        if !(learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold learning rate must be positive, got {learning_rate}"
            )));
        }
        let mut mem = Self {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
            threshold: initial_tt,
            optimizer: AdamState::new(1, learning_rate),
            trace: Vec::new(),
        };
        mem.record();
        Ok(mem)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Overrides the threshold without touching the optimizer state.
    pub fn set_threshold(&mut self, tt: f64) {
        self.threshold = tt;
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = (f64, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn oldest(&self) -> Option<(f64, f64)> {
        self.entries.front().copied()
    }

    /// Every threshold state since construction; the first point is the
    /// initial threshold.
    pub fn trace(&self) -> &[TtTracePoint] {
        &self.trace
    }

    pub fn clear_trace(&mut self) {
        self.trace.clear();
        self.record();
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.optimizer
    }

    /// Appends a pair, evicting the oldest when full.
    pub fn push(&mut self, y: f64, l: f64) -> Result<()> {
        if !y.is_finite() || !l.is_finite() {
            return Err(Error::NonFinite(format!("memory entry ({y}, {l})")));
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((y, l));
        Ok(())
    }

    /// `SSE_TT` at an arbitrary threshold; zero for an empty memory.
    pub fn sse_tt(&self, tt: f64) -> f64 {
        sse_tt_of(self.entries(), tt)
    }

    /// Derivative of [`TrustMemory::sse_tt`] with respect to the threshold.
    /// At breakpoints the entry counts as inactive.
    pub fn grad_tt(&self, tt: f64) -> f64 {
        self.entries()
            .filter(|&(y, l)| is_active(y, l, tt))
            .map(|(y, _)| 2.0 * (tt - y))
            .sum()
    }

    /// Runs `steps` adam updates on the threshold and records each one.
    pub fn update_tt(&mut self, steps: usize) -> Result<f64> {
        for _ in 0..steps {
            let g = self.grad_tt(self.threshold);
            let mut p = [self.threshold];
            adam_step(&mut p, &[g], &mut self.optimizer)?;
            if !p[0].is_finite() {
                return Err(Error::NonFinite("trust threshold".into()));
            }
            self.threshold = p[0];
            self.record();
        }
        Ok(self.threshold)
    }

    fn record(&mut self) {
        self.trace.push(TtTracePoint {
            step: self.optimizer.step,
            tt: self.threshold,
            sse_tt: self.sse_tt(self.threshold),
            buffer_count: self.entries.len(),
        });
    }

    /// Exact global minimiser of `SSE_TT` over `[lo, hi]`.
    ///
    /// Between consecutive entry values the active set is fixed and the
    /// objective is a parabola minimised at the mean of the active
    /// predictions. Every term vanishes at its own breakpoints, so the
    /// objective is lower semicontinuous and its infimum over each piece is
    /// attained either at an endpoint or at the interior parabola vertex.
    /// Ties resolve to the smallest threshold.
    pub fn scan_optimal_tt(&self, lo: f64, hi: f64) -> Result<(f64, f64)> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("empty search range [{lo}, {hi}]")));
        }
        let mut points: Vec<f64> = vec![lo, hi];
        points.extend(self.entries().flat_map(|(y, l)| [y, l]).filter(|&v| v > lo && v < hi));
        points.sort_by(f64::total_cmp);
        points.dedup();

        let mut candidates = points.clone();
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let (mut sum, mut count) = (0.0, 0usize);
            for (y, l) in self.entries() {
                if is_active(y, l, mid) {
                    sum += y;
                    count += 1;
                }
            }
            if count > 0 {
                let vertex = sum / count as f64;
                if vertex > a && vertex < b {
                    candidates.push(vertex);
                }
            }
        }
        candidates.sort_by(f64::total_cmp);

        let mut best = (candidates[0], self.sse_tt(candidates[0]));
        for &tt in &candidates[1..] {
            let loss = self.sse_tt(tt);
            if loss < best.1 {
                best = (tt, loss);
            }
        }
        Ok(best)
    }

    pub fn to_snapshot(&self) -> TrustMemorySnapshot {
        let (ys, ls): (Vec<f64>, Vec<f64>) = self.entries().unzip();
        TrustMemorySnapshot {
            capacity: self.capacity,
            threshold: self.threshold,
            predictions: ys,
            labels: ls,
            optimizer: self.optimizer.clone(),
        }
    }

    pub fn from_snapshot(s: TrustMemorySnapshot) -> Result<Self> {
        if s.predictions.len() != s.labels.len() || s.predictions.len() > s.capacity {
            return Err(Error::Shape("trust memory snapshot entries".into()));
        }
        let mut mem = Self {
            capacity: s.capacity,
            entries: s.predictions.into_iter().zip(s.labels).collect(),
            threshold: s.threshold,
            optimizer: s.optimizer,
            trace: Vec::new(),
        };
        mem.record();
        Ok(mem)
    }
}

/// Serialisable memory state. The threshold trace is not persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustMemorySnapshot {
    pub capacity: usize,
    pub threshold: f64,
    #[serde(with = "codec")]
    pub predictions: Vec<f64>,
    #[serde(with = "codec")]
    pub labels: Vec<f64>,
    pub optimizer: AdamState,
}
