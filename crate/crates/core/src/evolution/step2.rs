use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::crowding::CrowdingVariant;
use super::evaluator::Evaluate;
use super::fitness::{fitness_f2, fitness_f3};
use super::nsga::{nsga2, NsgaConfig, PerIndividual};
use super::pair::{pair_search, PairConfig, PairOutcome};
use super::{dedupe, Individual, Observation};
use crate::error::{Error, Result};
use crate::param_space::{Chromosome, ParameterSpace};
use crate::seed;

/// Settings of the two NSGA-II′ searches that follow PaiR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step2Config {
    pub population: usize,
    /// k
    pub iterations: usize,
    pub crossover: f64,
    pub mutation: f64,
}

impl Default for Step2Config {
    fn default() -> Self {
        Self {
            population: 25,
            iterations: 100,
            crossover: 0.3,
            mutation: 0.3,
        }
    }
}

impl Step2Config {
    fn nsga(&self) -> NsgaConfig {
        NsgaConfig {
            population: self.population,
            generations: self.iterations,
            crossover: self.crossover,
            mutation: self.mutation,
            crowding: CrowdingVariant::Modified,
            repopulate: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step2Outcome<E> {
    pub pair: PairOutcome<E>,
    /// Failing, in-cluster individuals near P1.
    pub unsafe_set: Vec<Individual<E>>,
    /// Passing individuals near the unsafe set.
    pub safe_set: Vec<Individual<E>>,
    /// Per-objective minima of the two NSGA-II′ runs, by generation.
    pub unsafe_minima: Vec<Vec<f64>>,
    pub safe_minima: Vec<Vec<f64>>,
}

impl<E> Step2Outcome<E> {
    /// PaiR found nothing inside the cluster.
    pub fn uncoverable(&self) -> bool {
        self.pair.in_cluster.is_empty()
    }
}

fn cycled<E>(seed_pop: &[Individual<E>], n: usize) -> Vec<Chromosome> {
    seed_pop.iter().cycle().take(n).map(|i| i.chromosome.clone()).collect()
}

fn encoded<E: Observation>(pop: &[Individual<E>]) -> Vec<Vec<f64>> {
    pop.iter().map(|i| i.eval.encoded().to_vec()).collect()
}

/// PaiR, then NSGA-II′ toward failing neighbors of P1 (F2), then NSGA-II′
/// toward passing neighbors of the unsafe set (F3).
pub fn step2<V>(
    evaluator: &V,
    space: &Arc<ParameterSpace>,
    pair_cfg: &PairConfig,
    cfg: &Step2Config,
    cluster: usize,
    rng: &mut seed::Rng,
) -> Result<Step2Outcome<V::Output>>
where
    V: Evaluate,
    V::Output: Observation,
{
    let pair = pair_search(evaluator, space, pair_cfg, cluster, rng)?;
    let mut out = Step2Outcome {
        pair,
        unsafe_set: Vec::new(),
        safe_set: Vec::new(),
        unsafe_minima: Vec::new(),
        safe_minima: Vec::new(),
    };
    if out.uncoverable() {
        return Ok(out);
    }
    let wrap = |e: Error| Error::Search {
        cluster,
        iteration: 0,
        source: Box::new(e),
    };

    let p1 = encoded(&out.pair.in_cluster);
    let mut f2 = PerIndividual::new(p1.len(), |i: &Individual<V::Output>| {
        Ok(fitness_f2(&*i.eval, &p1)?.into_iter().map(|(v, _)| v).collect())
    });
    let run = nsga2(evaluator, &mut f2, cycled(&out.pair.in_cluster, cfg.population), &cfg.nsga(), rng).map_err(wrap)?;
    out.unsafe_minima = run.minima;
    out.unsafe_set = dedupe(
        run.population
            .into_iter()
            .filter(|i| i.eval.failing() && i.eval.in_cluster())
            .collect(),
    );
    if out.unsafe_set.is_empty() {
        return Ok(out);
    }

    let p2 = encoded(&out.unsafe_set);
    let mut f3 = PerIndividual::new(p2.len(), |i: &Individual<V::Output>| {
        Ok(fitness_f3(&*i.eval, &p2)?.into_iter().map(|(v, _)| v).collect())
    });
    let run = nsga2(evaluator, &mut f3, cycled(&out.unsafe_set, cfg.population), &cfg.nsga(), rng).map_err(wrap)?;
    out.safe_minima = run.minima;
    out.safe_set = dedupe(run.population.into_iter().filter(|i| !i.eval.failing()).collect());
    Ok(out)
}
