use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, SeededRng};

/// One labelled feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSample {
    pub sample_id: String,
    pub features: Vec<f64>,
    pub true_class: usize,
    pub group_id: Option<String>,
}

/// Gaussian class clusters with an optional per-class drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub classes: usize,
    pub features: usize,
    /// Standard deviation of the class means around the origin.
    pub separation: f64,
    /// Within-class standard deviation.
    pub noise: f64,
    /// Length of each class's mean shift after the drift point.
    pub drift_shift: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            features: 8,
            separation: 1.0,
            noise: 0.9,
            drift_shift: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWorld {
    config: WorldConfig,
    means: Vec<Vec<f64>>,
    shifts: Vec<Vec<f64>>,
}

impl FeatureWorld {
    pub fn new(config: WorldConfig) -> Result<Self> {
        if config.classes < 2 || config.features == 0 {
            return Err(Error::InvalidArgument(
                "a feature world needs at least two classes and one feature".into(),
            ));
        }
        if !(config.noise >= 0.0) || !(config.separation >= 0.0) || !(config.drift_shift >= 0.0) {
            return Err(Error::InvalidArgument("world scales must be non-negative".into()));
        }
        let mut rng = SeededRng::new(derive_seed(config.seed, 10));
        let d = config.features;
        let means = (0..config.classes)
            .map(|_| (0..d).map(|_| rng.normal(0.0, config.separation)).collect())
            .collect();
        let shifts = (0..config.classes)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.normal(0.0, 1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.iter().map(|x| x * config.drift_shift / norm).collect()
            })
            .collect();
        Ok(Self { config, means, shifts })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    pub fn features(&self) -> usize {
        self.config.features
    }

    fn draw(&self, rng: &mut SeededRng, drifted: bool, id: String, group: Option<String>) -> FeatureSample {
        let class = rng.int_range(0, self.config.classes - 1);
        let features = (0..self.config.features)
            .map(|j| {
                let shift = if drifted { self.shifts[class][j] } else { 0.0 };
                self.means[class][j] + shift + rng.normal(0.0, self.config.noise)
            })
            .collect();
        FeatureSample {
            sample_id: id,
            features,
            true_class: class,
            group_id: group,
        }
    }

    /// `count` undrifted samples; `tag` selects an independent stream.
    pub fn sample(&self, count: usize, tag: &str, stream: u64) -> Vec<FeatureSample> {
        let mut rng = SeededRng::new(derive_seed(self.config.seed, 20 + stream));
        (0..count)
            .map(|i| self.draw(&mut rng, false, format!("{tag}-{i:05}"), None))
            .collect()
    }

    /// Stream whose first `drift_at` samples are undrifted (group `pre`)
    /// and the rest drifted (group `post`).
    pub fn drift_stream(&self, count: usize, drift_at: usize, stream: u64) -> Vec<FeatureSample> {
        let mut rng = SeededRng::new(derive_seed(self.config.seed, 40 + stream));
        (0..count)
            .map(|i| {
                let drifted = i >= drift_at;
                let group = if drifted { "post" } else { "pre" };
                self.draw(&mut rng, drifted, format!("stream-{i:05}"), Some(group.to_string()))
            })
            .collect()
    }
}
