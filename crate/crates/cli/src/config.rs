//! Experiment configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trustsup::ensemble::{SynthConfig, ToyConfig, WorldConfig};
use trustsup::loops::LoopConfig;
use trustsup::pipeline::TrustConfig;
use trustsup::supervisor::TrainConfig;

use crate::exit::ConfigError;

/// Top-level experiment description. Every section is optional and falls
/// back to its defaults; unknown keys are rejected.
///
/// The top-level `seed` drives every section: section-level `seed` keys
/// are overwritten when the config is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub trust: TrustConfig,
    #[serde(rename = "loop")]
    pub loop_cfg: LoopConfig,
    pub toy: ToySection,
    pub bench: BenchSection,
    pub paths: Paths,
}

/// Feature world and toy ensemble used by the active-learning mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySection {
    pub ensemble: ToyConfig,
    pub world: WorldConfig,
    pub train_samples: usize,
    /// Samples labelled by the trained ensemble to fit its supervisor.
    pub supervisor_samples: usize,
    pub stream_samples: usize,
    /// Stream position where the class clusters shift.
    pub drift_at: usize,
}

impl Default for ToySection {
    fn default() -> Self {
        Self {
            ensemble: ToyConfig::default(),
            world: WorldConfig::default(),
            train_samples: 1000,
            supervisor_samples: 2000,
            stream_samples: 2000,
            drift_at: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Oracle budgets evaluated in active mode.
    pub budgets: Vec<f64>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            budgets: vec![0.01, 0.001],
        }
    }
}

/// Artifact directories, relative to `--out` unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: PathBuf,
    pub model: PathBuf,
    pub eval: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "data".into(),
            model: "model".into(),
            eval: "eval".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Applies the seed override and pushes the master seed into each
    /// section.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self, ConfigError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        let s = self.seed;
        self.synth.seed = s;
        self.train.seed = s;
        self.loop_cfg.seed = s;
        self.toy.ensemble.seed = s;
        self.toy.world.seed = s;
        self.toy.ensemble.classes = self.toy.world.classes;
        self.toy.ensemble.features = self.toy.world.features;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |e: trustsup::Error| ConfigError(e.to_string());
        self.synth.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.loop_cfg.validate().map_err(wrap)?;
        if self.trust.capacity == 0 {
            return Err(ConfigError("trust.capacity must be positive".into()));
        }
        if !(self.trust.learning_rate > 0.0) {
            return Err(ConfigError("trust.learning_rate must be positive".into()));
        }
        if self.toy.drift_at > self.toy.stream_samples {
            return Err(ConfigError("toy.drift_at exceeds toy.stream_samples".into()));
        }
        for &b in &self.bench.budgets {
            if !(0.0..=1.0).contains(&b) {
                return Err(ConfigError(format!("bench budget {b} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}
