//! Building the unsafe improvement set and fine-tuning on a mixture of it
//! with the original data.

use log::warn;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{DenseNet, LabeledInput, TrainOptions};
use crate::rules::{sample_expression, UnsafeExpression};
use crate::seed;
use crate::simulator::{RenderedSample, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrainConfig {
    /// Percentage of the simulator training pool kept (S).
    pub simulator_share: f64,
    /// Percentage of the field pool kept (R).
    pub field_share: f64,
    /// Unsafe samples drawn per cluster expression.
    pub unsafe_per_cluster: usize,
    pub repetitions: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            simulator_share: 5.0,
            field_share: 100.0,
            unsafe_per_cluster: 50,
            repetitions: 3,
            epochs: 100,
            learning_rate: 0.02,
            batch_size: 32,
        }
    }
}

impl RetrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("simulator_share", self.simulator_share), ("field_share", self.field_share)] {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 100]")));
            }
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("batch size and learning rate must be positive".into()));
        }
        Ok(())
    }

    fn train_options(&self, seed: u64) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
        }
    }
}

/// A rendered sample drawn from one cluster's expression.
#[derive(Debug, Clone)]
pub struct UnsafeSample {
    pub cluster: usize,
    pub sample: RenderedSample,
}

#[derive(Debug)]
pub struct UnsafeSet {
    pub samples: Vec<UnsafeSample>,
    /// Clusters whose expression could not be sampled.
    pub failures: Vec<(usize, Error)>,
}

impl UnsafeSet {
    pub fn labeled(&self) -> Result<Vec<LabeledInput>> {
        self.samples
            .iter()
            .map(|s| {
                Ok(LabeledInput {
                    input: s.sample.input.clone(),
                    label: s.sample.class()?,
                })
            })
            .collect()
    }
}

/// Samples `count` chromosomes from each cluster's expression and renders
/// them. A cluster whose expression cannot be sampled is skipped.
pub fn build_unsafe_set(
    expressions: &[(usize, UnsafeExpression)],
    count: usize,
    simulator: &dyn Simulator,
    master_seed: u64,
) -> Result<UnsafeSet> {
    let mut out = UnsafeSet {
        samples: Vec::new(),
        failures: Vec::new(),
    };
    for (cluster, expr) in expressions {
        let mut rng = seed::rng(seed::derive_indexed(master_seed, &["unsafe-set"], *cluster as u64));
        let chromosomes = match sample_expression(expr, simulator.space(), count, &mut rng) {
            Ok(c) => c,
            Err(e @ Error::Unsatisfiable(_)) => {
                warn!("cluster {cluster}: no unsafe samples ({e})");
                out.failures.push((*cluster, e));
                continue;
            }
            Err(e) => return Err(e),
        };
        for c in chromosomes {
            if !expr.eval(&c)? {
                return Err(Error::Contract(format!("sample outside the expression of cluster {cluster}")));
            }
            out.samples.push(UnsafeSample {
                cluster: *cluster,
                sample: simulator.render(&c)?,
            });
        }
    }
    Ok(out)
}

/// Data the retraining mixes from and is scored on.
#[derive(Debug, Clone)]
pub struct Pools {
    pub simulator: Vec<LabeledInput>,
    pub field: Vec<LabeledInput>,
    pub test: Vec<LabeledInput>,
}

/// Items kept when taking `percent` of `len`, rounded to nearest.
pub fn share_of(len: usize, percent: f64) -> usize {
    ((len as f64 * percent / 100.0).round() as usize).min(len)
}

#[derive(Debug, Clone)]
pub struct Repetition {
    pub seed: u64,
    pub simulator_count: usize,
    pub field_count: usize,
    pub improvement_count: usize,
    /// Test accuracy; 0 when training diverged.
    pub accuracy: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct RetrainOutcome {
    pub best: DenseNet,
    pub best_index: usize,
    pub best_accuracy: f64,
    pub repetitions: Vec<Repetition>,
}

impl RetrainOutcome {
    pub fn accuracies(&self) -> Vec<f64> {
        self.repetitions.iter().map(|r| r.accuracy).collect()
    }
}

fn subsample(pool: &[LabeledInput], percent: f64, rng: &mut seed::Rng) -> Vec<LabeledInput> {
    let k = share_of(pool.len(), percent);
    let mut idx = sample(rng, pool.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i].clone()).collect()
}

/// Fine-tunes copies of `model` on S% of the simulator pool, R% of the field
/// pool and the improvement set, and keeps the copy with the best test
/// accuracy.
pub fn retrain(
    model: &DenseNet,
    pools: &Pools,
    improvement: &[LabeledInput],
    cfg: &RetrainConfig,
    master_seed: u64,
) -> Result<RetrainOutcome> {
    cfg.validate()?;
    if pools.simulator.is_empty() || pools.field.is_empty() || pools.test.is_empty() {
        return Err(Error::Contract("retraining pools must be nonempty".into()));
    }
    let mut best: Option<(usize, f64, DenseNet)> = None;
    let mut reps = Vec::with_capacity(cfg.repetitions);
    for r in 0..cfg.repetitions {
        let rep_seed = seed::derive_indexed(master_seed, &["retrain"], r as u64);
        let mut rng = seed::rng(rep_seed);
        let mut data = subsample(&pools.simulator, cfg.simulator_share, &mut rng);
        let simulator_count = data.len();
        let field = subsample(&pools.field, cfg.field_share, &mut rng);
        let field_count = field.len();
        data.extend(field);
        data.extend(improvement.iter().cloned());
        let mut rep = Repetition {
            seed: rep_seed,
            simulator_count,
            field_count,
            improvement_count: improvement.len(),
            accuracy: 0.0,
            diverged: false,
        };
        match model.train(&data, &cfg.train_options(rng.gen())) {
            Ok(out) => {
                rep.accuracy = out.net.accuracy(&pools.test)?;
                if best.as_ref().is_none_or(|b| rep.accuracy > b.1) {
                    best = Some((r, rep.accuracy, out.net));
                }
            }
            Err(e @ Error::Training { .. }) => {
                warn!("retraining repetition {r} diverged: {e}");
                rep.diverged = true;
            }
            Err(e) => return Err(e),
        }
        reps.push(rep);
    }
    let (best_index, best_accuracy, best) = best.ok_or_else(|| Error::Training {
        epoch: 0,
        detail: "every retraining repetition diverged".into(),
    })?;
    Ok(RetrainOutcome {
        best,
        best_index,
        best_accuracy,
        repetitions: reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shares_round_to_nearest() {
        assert_eq!(share_of(3000, 5.0), 150);
        assert_eq!(share_of(300, 100.0), 300);
        assert_eq!(share_of(10, 0.0), 0);
        assert_eq!(share_of(7, 50.0), 4);
    }

    #[test]
    fn config_validation() {
        assert!(RetrainConfig::default().validate().is_ok());
        let bad = RetrainConfig {
            field_share: 120.0,
            ..RetrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RetrainConfig {
            repetitions: 0,
            ..RetrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
