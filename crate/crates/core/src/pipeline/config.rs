use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{PairConfig, Step2Config};
use crate::neural::DEFAULT_LRP_EPSILON;
use crate::retrain::RetrainConfig;
use crate::rules::PartOptions;

/// Everything a run depends on. Stored as TOML with one table per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: String,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
    pub model: ModelConfig,
    pub clustering: ClusteringConfig,
    pub pair: PairConfig,
    pub step2: Step2Config,
    pub rules: PartOptions,
    pub evaluate: EvaluateConfig,
    pub retrain: RetrainConfig,
    pub compare: CompareConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Load this model instead of training one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub hidden: Vec<usize>,
    /// Simulator training pool size.
    pub training_size: usize,
    /// Field pool size; the model is trained on both pools.
    pub field_size: usize,
    /// Test set size; failures are taken from it.
    pub test_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_k: Option<usize>,
    pub lrp_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Inputs drawn from each expression, and from the random baseline.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub seeds: usize,
    /// Evenly spaced points along the budget where metrics are taken.
    pub checkpoints: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            scenario: crate::simulator::HEAD_POSE.into(),
            seed: 1,
            workers: 0,
            model: ModelConfig {
                path: None,
                hidden: vec![64, 32],
                training_size: 20000,
                field_size: 300,
                test_size: 2000,
                epochs: 30,
                learning_rate: 0.05,
                batch_size: 32,
            },
            clustering: ClusteringConfig {
                max_k: Some(10),
                lrp_epsilon: DEFAULT_LRP_EPSILON,
            },
            pair: PairConfig::default(),
            step2: Step2Config::default(),
            rules: PartOptions::default(),
            evaluate: EvaluateConfig { samples: 500 },
            retrain: RetrainConfig::default(),
            compare: CompareConfig {
                seeds: 4,
                checkpoints: 4,
            },
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Parse {
            position: e.span().map_or(0, |s| s.start),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let probability = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {p} outside [0, 1]")))
            }
        };
        self.pair.validate()?;
        probability("step2.crossover", self.step2.crossover)?;
        probability("step2.mutation", self.step2.mutation)?;
        if self.step2.population < 2 {
            return Err(Error::Config("step2.population must be at least 2".into()));
        }
        self.retrain.validate()?;
        let m = &self.model;
        if m.training_size == 0 || m.field_size == 0 || m.test_size == 0 {
            return Err(Error::Config("model pools must be nonempty".into()));
        }
        if m.hidden.contains(&0) || m.batch_size == 0 || !(m.learning_rate > 0.0) {
            return Err(Error::Config("model layers, batch size and learning rate must be positive".into()));
        }
        if !(self.clustering.lrp_epsilon > 0.0) {
            return Err(Error::Config("clustering.lrp_epsilon must be positive".into()));
        }
        if self.clustering.max_k == Some(0) {
            return Err(Error::Config("clustering.max_k must be positive".into()));
        }
        if !(0.0 < self.rules.confidence && self.rules.confidence <= 0.5) || self.rules.min_leaf == 0 {
            return Err(Error::Config("rules.confidence must be in (0, 0.5] and min_leaf positive".into()));
        }
        if self.evaluate.samples == 0 {
            return Err(Error::Config("evaluate.samples must be positive".into()));
        }
        if self.compare.seeds < 2 || self.compare.checkpoints == 0 {
            return Err(Error::Config("compare needs at least 2 seeds and 1 checkpoint".into()));
        }
        Ok(())
    }
}
