//! Evaluation modes over a test stream.
//!
//! * **Maximal**: plurality vote, trust flag from the static supervisor.
//! * **Predicted**: vote closest to the supervisor's prediction, static
//!   threshold.
//! * **Online**: as predicted, then after every sample the supervisor is
//!   retrained on its reference set plus the new observation and the
//!   threshold takes optimizer steps on the updated memory.
//! * **Active**: as predicted on a live toy ensemble; when the supervisor
//!   distrusts a sample and budget remains, the oracle label is fed back
//!   into the ensemble's reference set and the members are retrained.
//!
//! Active learning never touches the supervisor and online learning never
//! touches the ensemble.

use serde::{Deserialize, Serialize};

use crate::decision::{
    maximal_vote, predicted_vote, trust_flag, trusted_metrics, EvalRecord, TrustedMetrics, VoteCounts,
};
use crate::descriptor::{build_usd, DescriptorShape};
use crate::ensemble::{correct_count, FeatureSample, LabeledSample, ToyEnsemble};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, SeededRng};
use crate::pipeline::ReferenceSet;
use crate::supervisor::{SupervisorNet, TrainConfig};
use crate::trust_loss::TrustMemory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Maximal,
    Predicted,
    Online,
    Active,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "maximal" => Some(Mode::Maximal),
            "predicted" => Some(Mode::Predicted),
            "online" => Some(Mode::Online),
            "active" => Some(Mode::Active),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Maximal => "maximal",
            Mode::Predicted => "predicted",
            Mode::Online => "online",
            Mode::Active => "active",
        }
    }

    /// Column heading used in metric tables.
    pub fn column(self, budget: f64) -> String {
        match self {
            Mode::Maximal => "Maximal".into(),
            Mode::Predicted => "Predicted".into(),
            Mode::Online => "Online".into(),
            Mode::Active => {
                let pct = format!("{:.4}", budget * 100.0);
                let pct = pct.trim_end_matches('0').trim_end_matches('.');
                format!("Active {pct}%")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamOrder {
    Shuffled,
    Grouped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub mode: Mode,
    /// Fraction of the stream the oracle may label.
    pub oracle_budget: f64,
    pub online_epochs: usize,
    /// Threshold optimizer steps after each online sample.
    pub online_tt_steps: usize,
    pub al_ensemble_epochs: usize,
    pub stream_order: StreamOrder,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Predicted,
            oracle_budget: 0.01,
            online_epochs: 10,
            online_tt_steps: 1,
            al_ensemble_epochs: 5,
            stream_order: StreamOrder::Shuffled,
            seed: 0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.oracle_budget) {
            return Err(Error::InvalidArgument(format!(
                "oracle budget must lie in [0, 1], got {}",
                self.oracle_budget
            )));
        }
        Ok(())
    }
}

/// Oracle calls allowed on a stream of `len` samples: `floor(β·len)`.
///
/// The product is nudged by 1e-9 so that values such as `0.29 · 100`,
/// which land just below an integer in binary, floor correctly.
pub fn oracle_budget(fraction: f64, len: usize) -> usize {
    (fraction * len as f64 + 1e-9).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopResult {
    pub mode: Mode,
    pub records: Vec<EvalRecord>,
    pub metrics: TrustedMetrics,
    /// `(step, TT)` after each threshold change; the first entry is the
    /// starting threshold.
    pub tt_trace: Vec<(u64, f64)>,
    pub oracle_calls: usize,
    pub oracle_budget: usize,
}

/// Reorders a stream: a seeded shuffle, or samples gathered by group in
/// order of each group's first appearance (stable within a group).
pub fn order_stream<T: Clone>(
    items: &[T],
    group: impl Fn(&T) -> Option<&str>,
    order: StreamOrder,
    seed: u64,
) -> Vec<T> {
    match order {
        StreamOrder::Shuffled => {
            let mut out = items.to_vec();
            SeededRng::new(derive_seed(seed, 500)).shuffle(&mut out);
            out
        }
        StreamOrder::Grouped => {
            let mut firsts: Vec<Option<&str>> = Vec::new();
            for it in items {
                let g = group(it);
                if !firsts.contains(&g) {
                    firsts.push(g);
                }
            }
            let mut keyed: Vec<(usize, usize)> = items
                .iter()
                .enumerate()
                .map(|(i, it)| (firsts.iter().position(|g| *g == group(it)).unwrap(), i))
                .collect();
            keyed.sort();
            keyed.into_iter().map(|(_, i)| items[i].clone()).collect()
        }
    }
}

fn check_shape(net: &SupervisorNet, shape: DescriptorShape) -> Result<()> {
    if net.input_len() != shape.len() {
        return Err(Error::Shape(format!(
            "stream is {}x{} but the supervisor expects descriptors of length {}",
            shape.models,
            shape.classes,
            net.input_len()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Vote {
    Maximal,
    Predicted,
}

fn classify(net: &SupervisorNet, tt: f64, sample: &LabeledSample, vote: Vote) -> Result<EvalRecord> {
    check_shape(net, sample.activations.shape())?;
    let usd = build_usd(&sample.activations);
    let y = net.forward(&usd.values)?;
    let votes = VoteCounts::from_activations(&sample.activations);
    let voted_class = match vote {
        Vote::Maximal => maximal_vote(&votes),
        Vote::Predicted => predicted_vote(&votes, y)?,
    };
    Ok(EvalRecord {
        sample_id: sample.sample_id.clone(),
        true_class: sample.true_class,
        voted_class,
        y,
        trusted: trust_flag(y, tt),
        oracle_used: false,
    })
}

fn finish(
    mode: Mode,
    records: Vec<EvalRecord>,
    tt_trace: Vec<(u64, f64)>,
    calls: usize,
    budget: usize,
) -> Result<LoopResult> {
    assert!(calls <= budget, "oracle budget exceeded: {calls} > {budget}");
    Ok(LoopResult {
        mode,
        metrics: trusted_metrics(&records)?,
        records,
        tt_trace,
        oracle_calls: calls,
        oracle_budget: budget,
    })
}

fn run_static(
    net: &SupervisorNet,
    memory: &TrustMemory,
    samples: &[LabeledSample],
    vote: Vote,
    mode: Mode,
) -> Result<LoopResult> {
    let tt = memory.threshold();
    let records = samples
        .iter()
        .map(|s| classify(net, tt, s, vote))
        .collect::<Result<Vec<_>>>()?;
    finish(mode, records, vec![(0, tt)], 0, 0)
}

/// Plurality vote baseline, flagged with the static threshold.
pub fn run_maximal(net: &SupervisorNet, memory: &TrustMemory, samples: &[LabeledSample]) -> Result<LoopResult> {
    run_static(net, memory, samples, Vote::Maximal, Mode::Maximal)
}

/// Supervisor-guided vote with a frozen threshold.
pub fn run_predicted(net: &SupervisorNet, memory: &TrustMemory, samples: &[LabeledSample]) -> Result<LoopResult> {
    run_static(net, memory, samples, Vote::Predicted, Mode::Predicted)
}

/// Classify, then learn from the revealed label before the next sample.
pub fn run_online(
    net: &mut SupervisorNet,
    memory: &mut TrustMemory,
    reference: &ReferenceSet,
    samples: &[LabeledSample],
    cfg: &LoopConfig,
    train: &TrainConfig,
) -> Result<LoopResult> {
    cfg.validate()?;
    let mut x = reference.matrix()?;
    let mut labels = reference.labels.clone();
    let mut records = Vec::with_capacity(samples.len());
    let mut trace = vec![(0, memory.threshold())];
    for (i, s) in samples.iter().enumerate() {
        let rec = classify(net, memory.threshold(), s, Vote::Predicted)?;
        let e = correct_count(s) as f64;
        memory.push(rec.y, e)?;
        if cfg.online_epochs > 0 {
            let usd = build_usd(&s.activations);
            x.push_row(&usd.values)?;
            labels.push(e);
            let step_cfg = TrainConfig {
                epochs: cfg.online_epochs,
                seed: derive_seed(cfg.seed, 10_000 + i as u64),
                ..train.clone()
            };
            let result = net.train(&x, &labels, &step_cfg, None);
            // Only the reference set persists between steps.
            labels.pop();
            x = reference.matrix()?;
            result?;
        }
        memory.update_tt(cfg.online_tt_steps)?;
        trace.push((i as u64 + 1, memory.threshold()));
        records.push(rec);
    }
    finish(Mode::Online, records, trace, 0, 0)
}

/// Active learning over a feature stream with a budgeted oracle.
pub fn run_active(
    ensemble: &mut ToyEnsemble,
    net: &SupervisorNet,
    memory: &TrustMemory,
    stream: &[FeatureSample],
    cfg: &LoopConfig,
) -> Result<LoopResult> {
    cfg.validate()?;
    let budget = oracle_budget(cfg.oracle_budget, stream.len());
    let tt = memory.threshold();
    let mut calls = 0;
    let mut records = Vec::with_capacity(stream.len());
    for s in stream {
        let labeled = LabeledSample {
            sample_id: s.sample_id.clone(),
            activations: ensemble.predict(&s.features)?,
            true_class: s.true_class,
            group_id: s.group_id.clone(),
        };
        let mut rec = classify(net, tt, &labeled, Vote::Predicted)?;
        if rec.y < tt && calls < budget {
            calls += 1;
            ensemble.oracle_update(s.clone(), cfg.al_ensemble_epochs)?;
            rec.oracle_used = true;
        }
        records.push(rec);
    }
    finish(Mode::Active, records, vec![(0, tt)], calls, budget)
}
