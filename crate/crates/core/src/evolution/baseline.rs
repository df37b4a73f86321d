use std::sync::Arc;

use super::crowding::CrowdingVariant;
use super::evaluator::Evaluate;
use super::nsga::{nsga2, NsgaConfig, Objectives, PerIndividual};
use super::{Individual, Observation};
use crate::error::{Error, Result};
use crate::param_space::{cosine_distance, random_chromosome, ParameterSpace};
use crate::seed;

/// Share of the population replaced by random individuals each generation
/// in DeepNSGA-II.
pub const DEEP_REPOPULATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub population: usize,
    /// Evaluation requests allowed; the run stops when they are used up.
    pub budget: usize,
    pub crossover: f64,
    pub mutation: f64,
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome<E> {
    /// What the algorithm returns: the final population for NSGA-II, the
    /// most sparse archive members for DeepNSGA-II.
    pub selected: Vec<Individual<E>>,
    pub population: Vec<Individual<E>>,
    pub archive: Vec<Individual<E>>,
    pub evaluations: usize,
}

fn nsga_config(cfg: &BaselineConfig, repopulate: f64) -> NsgaConfig {
    NsgaConfig {
        population: cfg.population,
        generations: usize::MAX,
        crossover: cfg.crossover,
        mutation: cfg.mutation,
        crowding: CrowdingVariant::Original,
        repopulate,
    }
}

fn check<V: Evaluate>(evaluator: &V, cfg: &BaselineConfig) -> Result<()> {
    match evaluator.budget() {
        Some(b) if b == cfg.budget => Ok(()),
        _ => Err(Error::Contract(format!(
            "baseline evaluator must carry the configured budget of {}",
            cfg.budget
        ))),
    }
}

/// Plain NSGA-II minimizing the cluster distance alone.
pub fn nsga2_baseline<V>(
    evaluator: &V,
    space: &Arc<ParameterSpace>,
    cfg: &BaselineConfig,
    rng: &mut seed::Rng,
) -> Result<BaselineOutcome<V::Output>>
where
    V: Evaluate,
    V::Output: Observation,
{
    check(evaluator, cfg)?;
    let init = (0..cfg.population).map(|_| random_chromosome(space, rng)).collect();
    let mut objective = PerIndividual::new(1, |i: &Individual<V::Output>| Ok(vec![i.eval.rcc_distance()]));
    let run = nsga2(evaluator, &mut objective, init, &nsga_config(cfg, 0.0), rng)?;
    Ok(BaselineOutcome {
        selected: run.population.clone(),
        population: run.population,
        archive: Vec::new(),
        evaluations: evaluator.requests(),
    })
}

/// Distance to the nearest archive member with a different chromosome;
/// 1.0 against an empty archive.
fn sparseness<E: Observation>(x: &Individual<E>, archive: &[Individual<E>]) -> Result<f64> {
    let key = x.chromosome.key();
    let mut best = f64::INFINITY;
    for a in archive {
        if a.chromosome.key() == key {
            return Ok(0.0);
        }
        best = best.min(cosine_distance(x.eval.encoded(), a.eval.encoded())?);
    }
    Ok(if best.is_finite() { best } else { 1.0 })
}

struct Novelty<E> {
    archive: Vec<Individual<E>>,
}

impl<E: Observation> Objectives<E> for Novelty<E> {
    fn count(&self) -> usize {
        2
    }

    fn assess(&mut self, population: &[Individual<E>]) -> Result<Vec<Vec<f64>>> {
        population
            .iter()
            .map(|i| {
                let others: Vec<Individual<E>> = self
                    .archive
                    .iter()
                    .filter(|a| a.chromosome.key() != i.chromosome.key())
                    .cloned()
                    .collect();
                Ok(vec![-sparseness(i, &others)?, i.eval.rcc_distance()])
            })
            .collect()
    }

    /// Admits in-cluster individuals that are not already archived.
    fn observe(&mut self, new: &[Individual<E>]) -> Result<()> {
        for i in new {
            if i.eval.in_cluster() && sparseness(i, &self.archive)? > 0.0 {
                self.archive.push(i.clone());
            }
        }
        Ok(())
    }
}

/// NSGA-II over (sparseness, cluster distance) with an archive of distinct
/// in-cluster individuals and random repopulation of the worst tenth.
pub fn deep_nsga2_baseline<V>(
    evaluator: &V,
    space: &Arc<ParameterSpace>,
    cfg: &BaselineConfig,
    rng: &mut seed::Rng,
) -> Result<BaselineOutcome<V::Output>>
where
    V: Evaluate,
    V::Output: Observation,
{
    check(evaluator, cfg)?;
    let init = (0..cfg.population).map(|_| random_chromosome(space, rng)).collect();
    let mut novelty = Novelty { archive: Vec::new() };
    let run = nsga2(evaluator, &mut novelty, init, &nsga_config(cfg, DEEP_REPOPULATION), rng)?;
    let archive = novelty.archive;
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(archive.len());
    for (k, a) in archive.iter().enumerate() {
        let others: Vec<Individual<V::Output>> = archive
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, x)| x.clone())
            .collect();
        scored.push((sparseness(a, &others)?, k));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let selected = scored
        .iter()
        .take(cfg.population)
        .map(|&(_, k)| archive[k].clone())
        .collect();
    Ok(BaselineOutcome {
        selected,
        population: run.population,
        archive,
        evaluations: evaluator.requests(),
    })
}
