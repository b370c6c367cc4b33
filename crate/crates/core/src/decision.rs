//! Trust flags, vote selection and the trusted metric suite.
//!
//! A record is *positive* when its vote is correct and the supervisor
//! trusts it:
//!
//! | vote    | trusted | untrusted |
//! |---------|---------|-----------|
//! | correct | TP      | FN        |
//! | wrong   | FP      | TN        |
//!
//! Trusted accuracy is `(TP + TN) / N`: a wrong vote that is flagged as
//! untrusted counts in the model's favour.

use serde::{Deserialize, Serialize};

use crate::descriptor::SoftmaxMatrix;
use crate::error::{Error, Result};

/// `y > TT`; equality is untrusted.
pub fn trust_flag(y: f64, tt: f64) -> bool {
    y > tt
}

/// Argmax votes per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteCounts(Vec<usize>);

impl VoteCounts {
    pub fn new(counts: Vec<usize>) -> Self {
        Self(counts)
    }

    pub fn from_activations(x: &SoftmaxMatrix) -> Self {
        let mut counts = vec![0; x.classes()];
        for m in 0..x.models() {
            counts[x.argmax(m)] += 1;
        }
        Self(counts)
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn get(&self, class: usize) -> usize {
        self.0[class]
    }
}

/// Plurality vote; ties go to the lowest class index.
pub fn maximal_vote(votes: &VoteCounts) -> usize {
    let c = votes.counts();
    let mut best = 0;
    for i in 1..c.len() {
        if c[i] > c[best] {
            best = i;
        }
    }
    best
}

/// Class whose vote count is closest to the supervisor's prediction.
///
/// Only classes with at least one vote are eligible. Ties prefer the class
/// with more votes, then the lower class index.
pub fn predicted_vote(votes: &VoteCounts, y: f64) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (class, &e) in votes.counts().iter().enumerate() {
        if e == 0 {
            continue;
        }
        let dist = (y - e as f64).abs();
        let better = match best {
            None => true,
            Some((b, bd)) => dist < bd || (dist == bd && e > votes.get(b)),
        };
        if better {
            best = Some((class, dist));
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::InvalidArgument("no class received a vote".into()))
}

/// Outcome of one classified sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub true_class: usize,
    pub voted_class: usize,
    pub y: f64,
    pub trusted: bool,
    pub oracle_used: bool,
}

impl EvalRecord {
    pub fn correct(&self) -> bool {
        self.voted_class == self.true_class
    }
}

/// Rates that were 0/0 and reported as 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degenerate {
    pub precision: bool,
    pub recall: bool,
    pub specificity: bool,
    pub f1: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.specificity || self.f1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustedMetrics {
    pub untrusted_accuracy: f64,
    pub trusted_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub degenerate: Degenerate,
}

fn rate(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (1.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl TrustedMetrics {
    /// Rebuilds every rate from the confusion counts.
    pub fn from_counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> Result<Self> {
        let n = tp + tn + fp + fn_;
        if n == 0 {
            return Err(Error::Empty("no evaluation records".into()));
        }
        let (precision, dp) = rate(tp, tp + fp);
        let (recall, dr) = rate(tp, tp + fn_);
        let (specificity, ds) = rate(tn, tn + fp);
        // 2PR/(P+R) written over counts; 0/0 only when TP = FP = FN = 0.
        let (f1, df) = rate(2 * tp, 2 * tp + fp + fn_);
        Ok(Self {
            untrusted_accuracy: (tp + fn_) as f64 / n as f64,
            trusted_accuracy: (tp + tn) as f64 / n as f64,
            precision,
            recall,
            specificity,
            f1,
            tp,
            tn,
            fp,
            fn_,
            degenerate: Degenerate {
                precision: dp,
                recall: dr,
                specificity: ds,
                f1: df,
            },
        })
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Values in the order of [`METRIC_LABELS`].
    pub fn table_values(&self) -> [f64; 6] {
        [
            self.untrusted_accuracy,
            self.trusted_accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.specificity,
        ]
    }
}

pub fn trusted_metrics(records: &[EvalRecord]) -> Result<TrustedMetrics> {
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for r in records {
        match (r.correct(), r.trusted) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
        }
    }
    TrustedMetrics::from_counts(tp, tn, fp, fn_)
}

/// Row labels of the metrics table.
pub const METRIC_LABELS: [&str; 6] = [
    "Untrusted accuracy",
    "Trusted accuracy",
    "Trusted precision",
    "Trusted recall",
    "Trusted F1 score",
    "Trusted specificity",
];

/// CSV with one row per metric and one column per evaluation mode.
pub fn metrics_table_csv(columns: &[(String, TrustedMetrics)]) -> String {
    let mut out = String::from("Metric");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (row, label) in METRIC_LABELS.iter().enumerate() {
        out.push_str(label);
        for (_, m) in columns {
            out.push_str(&format!(",{}", m.table_values()[row]));
        }
        out.push('\n');
    }
    out
}
