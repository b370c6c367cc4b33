use serde::{Deserialize, Serialize};

use super::LabeledSample;
use crate::descriptor::SoftmaxMatrix;
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, SeededRng};

/// Synthetic activation generator settings.
///
/// A *correct* member draws `Dirichlet(1, …, correct_concentration, …, 1)`
/// with the large concentration on the true class and is then re-ordered
/// so its maximum lands on the true class. An *incorrect* member draws a
/// flat symmetric `Dirichlet(incorrect_concentration)` with its maximum
/// moved off the true class. With probability `decoy_rate` the incorrect
/// members of a sample instead agree, confidently, on one shared wrong
/// class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub models: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Weights over the number of correct members `0..=models`.
    pub correct_count_weights: Vec<f64>,
    pub correct_concentration: f64,
    pub background_concentration: f64,
    pub incorrect_concentration: f64,
    pub decoy_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 21,
            models: 7,
            train_samples: 10_000,
            test_samples: 2_000,
            // Bimodal: out-of-distribution inputs defeat most members at
            // once, in-distribution ones rarely defeat any.
            correct_count_weights: vec![0.22, 0.08, 0.06, 0.06, 0.08, 0.10, 0.15, 0.25],
            correct_concentration: 8.0,
            background_concentration: 1.0,
            incorrect_concentration: 1.0,
            decoy_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.models == 0 {
            return Err(Error::InvalidArgument("classes and models must be positive".into()));
        }
        if self.correct_count_weights.len() != self.models + 1 {
            return Err(Error::InvalidArgument(format!(
                "correct_count_weights needs {} entries (0..={}), got {}",
                self.models + 1,
                self.models,
                self.correct_count_weights.len()
            )));
        }
        let total: f64 = self.correct_count_weights.iter().sum();
        if self.correct_count_weights.iter().any(|&w| w < 0.0 || !w.is_finite()) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(
                "correct_count_weights must be non-negative and sum to 1".into(),
            ));
        }
        for (name, v) in [
            ("correct_concentration", self.correct_concentration),
            ("background_concentration", self.background_concentration),
            ("incorrect_concentration", self.incorrect_concentration),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.decoy_rate) {
            return Err(Error::InvalidArgument("decoy_rate must lie in [0, 1]".into()));
        }
        let can_be_wrong = self.correct_count_weights[..self.models].iter().any(|&w| w > 0.0);
        if self.classes == 1 && can_be_wrong {
            return Err(Error::InvalidArgument(
                "a single class cannot host an incorrect member".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn tag(self) -> (&'static str, u64) {
        match self {
            Split::Train => ("train", 1),
            Split::Test => ("test", 2),
        }
    }
}

/// Draws one split of the configured dataset.
pub fn synth_generate(cfg: &SynthConfig, split: Split) -> Result<Vec<LabeledSample>> {
    cfg.validate()?;
    let (name, tag) = split.tag();
    let count = match split {
        Split::Train => cfg.train_samples,
        Split::Test => cfg.test_samples,
    };
    let mut rng = SeededRng::new(derive_seed(cfg.seed, tag));
    (0..count)
        .map(|i| draw_sample(cfg, &mut rng, format!("{name}-{i:05}"), None))
        .collect()
}

/// Per-session overrides for structured streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupProfile {
    pub name: String,
    pub samples: usize,
    #[serde(default)]
    pub correct_count_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub decoy_rate: Option<f64>,
}

/// Concatenates one block of samples per profile, tagging each with its
/// group id. Profiles override the base configuration.
pub fn grouped_stream(base: &SynthConfig, profiles: &[GroupProfile], seed: u64) -> Result<Vec<LabeledSample>> {
    let mut out = Vec::new();
    for (g, p) in profiles.iter().enumerate() {
        let mut cfg = base.clone();
        if let Some(w) = &p.correct_count_weights {
            cfg.correct_count_weights = w.clone();
        }
        if let Some(d) = p.decoy_rate {
            cfg.decoy_rate = d;
        }
        cfg.validate()?;
        let mut rng = SeededRng::new(derive_seed(seed, 100 + g as u64));
        for i in 0..p.samples {
            out.push(draw_sample(
                &cfg,
                &mut rng,
                format!("{}-{i:05}", p.name),
                Some(p.name.clone()),
            )?);
        }
    }
    Ok(out)
}

fn peaked(rng: &mut SeededRng, cfg: &SynthConfig, class: usize) -> Result<Vec<f64>> {
    let mut alpha = vec![cfg.background_concentration; cfg.classes];
    alpha[class] = cfg.correct_concentration;
    let mut p = rng.dirichlet(&alpha)?;
    move_max_to(&mut p, class);
    Ok(p)
}

fn move_max_to(p: &mut [f64], class: usize) {
    let top = crate::descriptor::argmax_first(p);
    if top != class {
        p.swap(top, class);
    }
    // An exact tie with a lower index would still steal the argmax.
    for i in 0..class {
        if p[i] == p[class] {
            let excess = p[i] * 1e-9;
            p[i] -= excess;
            p[class] += excess;
        }
    }
}

fn draw_sample(
    cfg: &SynthConfig,
    rng: &mut SeededRng,
    sample_id: String,
    group_id: Option<String>,
) -> Result<LabeledSample> {
    let c = cfg.classes;
    let m = cfg.models;
    let truth = rng.int_range(0, c - 1);
    let k = rng.categorical(&cfg.correct_count_weights);

    let decoy = if k < m && rng.uniform() < cfg.decoy_rate {
        let mut d = rng.int_range(0, c - 2);
        if d >= truth {
            d += 1;
        }
        Some(d)
    } else {
        None
    };

    let mut members: Vec<usize> = (0..m).collect();
    rng.shuffle(&mut members);
    let mut rows = vec![Vec::new(); m];
    for (rank, &member) in members.iter().enumerate() {
        rows[member] = if rank < k {
            peaked(rng, cfg, truth)?
        } else if let Some(d) = decoy {
            peaked(rng, cfg, d)?
        } else {
            let mut p = rng.dirichlet(&vec![cfg.incorrect_concentration; c])?;
            let mut off = rng.int_range(0, c - 2);
            if off >= truth {
                off += 1;
            }
            let top = crate::descriptor::argmax_first(&p);
            if top == truth {
                p.swap(truth, off);
            }
            if crate::descriptor::argmax_first(&p) == truth {
                // Exact tie between truth and another class at the top.
                let excess = p[truth] * 1e-9;
                p[truth] -= excess;
                p[off] += excess;
            }
            p
        };
    }
    let activations = SoftmaxMatrix::from_rows(&rows)?;
    Ok(LabeledSample {
        sample_id,
        activations,
        true_class: truth,
        group_id,
    })
}
