use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::evaluator::Evaluate;
use super::fitness::fitness_f1;
use super::operators::make_offspring;
use super::{Individual, Observation};
use crate::error::{Error, Result};
use crate::param_space::{cosine_distance, random_chromosome, Chromosome, ParameterSpace};
use crate::seed;
use crate::stats::population_diversity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    /// s
    pub population: usize,
    /// r, random populations generated up front.
    pub restarts: usize,
    /// b
    pub iterations: usize,
    pub crossover: f64,
    pub mutation: f64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            population: 25,
            restarts: 4,
            iterations: 100,
            crossover: 0.7,
            mutation: 0.3,
        }
    }
}

impl PairConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("PaiR population must be at least 2".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("PaiR needs at least one random population".into()));
        }
        for (name, p) in [("crossover", self.crossover), ("mutation", self.mutation)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Evaluation requests of a full run: s·r + s·b.
    pub fn budget(&self) -> usize {
        self.population * (self.restarts + self.iterations)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairTraceRow {
    pub iteration: usize,
    pub in_cluster: usize,
    pub best: f64,
    pub worst: f64,
    /// Mean pairwise chromosome distance among in-cluster individuals.
    pub diversity: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replacement {
    pub iteration: usize,
    /// Position in the population that was overwritten.
    pub slot: usize,
    pub parent_fitness: f64,
    pub offspring_fitness: f64,
    pub in_cluster_before: usize,
    pub in_cluster_after: usize,
}

#[derive(Debug, Clone)]
pub struct PairOutcome<E> {
    /// The returned set: final individuals that belong to the cluster.
    pub in_cluster: Vec<Individual<E>>,
    pub population: Vec<Individual<E>>,
    pub fitness: Vec<f64>,
    pub trace: Vec<PairTraceRow>,
    pub replacements: Vec<Replacement>,
}

fn parent_fitness<E: Observation>(pop: &[Individual<E>]) -> Result<Vec<f64>> {
    (0..pop.len())
        .map(|i| {
            let others = pop
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, p)| p.eval.encoded());
            fitness_f1(&*pop[i].eval, others)
        })
        .collect()
}

/// The parent an offspring competes with, and the offspring's fitness
/// against the population without that parent.
fn challenge<E: Observation>(o: &E, pop: &[Individual<E>], fit: &[f64]) -> Result<(usize, f64)> {
    let ip = if pop.iter().any(|p| !p.eval.in_cluster()) {
        fit.iter()
            .enumerate()
            .fold(0, |b, (i, f)| if *f > fit[b] { i } else { b })
    } else {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in pop.iter().enumerate() {
            let d = cosine_distance(o.encoded(), p.eval.encoded())?;
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    };
    let others = pop
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != ip)
        .map(|(_, p)| p.eval.encoded());
    Ok((ip, fitness_f1(o, others)?))
}

fn in_cluster_count<E: Observation>(pop: &[Individual<E>]) -> usize {
    pop.iter().filter(|p| p.eval.in_cluster()).count()
}

fn trace_row<E: Observation>(iteration: usize, pop: &[Individual<E>], fit: &[f64], evaluations: usize) -> Result<PairTraceRow> {
    let inside: Vec<Chromosome> = pop
        .iter()
        .filter(|p| p.eval.in_cluster())
        .map(|p| p.chromosome.clone())
        .collect();
    Ok(PairTraceRow {
        iteration,
        in_cluster: inside.len(),
        best: fit.iter().copied().fold(f64::INFINITY, f64::min),
        worst: fit.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        diversity: population_diversity(&inside)?.value,
        evaluations,
    })
}

/// Pairwise-replacement search for a diverse population inside one cluster.
///
/// `cluster` only labels errors.
pub fn pair_search<V>(
    evaluator: &V,
    space: &Arc<ParameterSpace>,
    cfg: &PairConfig,
    cluster: usize,
    rng: &mut seed::Rng,
) -> Result<PairOutcome<V::Output>>
where
    V: Evaluate,
    V::Output: Observation,
{
    cfg.validate()?;
    let s = cfg.population;
    let at = |iteration: usize| {
        move |e: Error| Error::Search {
            cluster,
            iteration,
            source: Box::new(e),
        }
    };

    let mut chosen: Option<(Vec<Individual<V::Output>>, Vec<f64>)> = None;
    for _ in 0..cfg.restarts {
        if evaluator.remaining().is_some_and(|r| r < s) {
            break;
        }
        let cs = (0..s).map(|_| random_chromosome(space, rng)).collect();
        let pop = evaluator.individuals(cs).map_err(at(0))?;
        let fit = parent_fitness(&pop).map_err(at(0))?;
        let min = fit.iter().copied().fold(f64::INFINITY, f64::min);
        let better = chosen
            .as_ref()
            .is_none_or(|(_, f)| min < f.iter().copied().fold(f64::INFINITY, f64::min));
        if better {
            chosen = Some((pop, fit));
        }
    }
    let (mut pop, mut fit) =
        chosen.ok_or_else(|| Error::Contract("budget too small for one random population".into()))?;

    let mut trace = vec![trace_row(0, &pop, &fit, evaluator.requests())?];
    let mut replacements = Vec::new();
    for t in 0..cfg.iterations {
        let count = evaluator.remaining().map_or(s, |r| r.min(s));
        if count == 0 {
            break;
        }
        let parents: Vec<Chromosome> = pop.iter().map(|p| p.chromosome.clone()).collect();
        let kids = make_offspring(&parents, count, cfg.crossover, cfg.mutation, rng, |a, b| fit[a] < fit[b]);
        let mut offspring = evaluator.individuals(kids).map_err(at(t + 1))?;
        while !offspring.is_empty() {
            let mut pick = 0;
            let mut pick_ip = 0;
            let mut pick_f = f64::INFINITY;
            for (k, o) in offspring.iter().enumerate() {
                let (ip, f) = challenge(&*o.eval, &pop, &fit).map_err(at(t + 1))?;
                if f < pick_f {
                    pick = k;
                    pick_ip = ip;
                    pick_f = f;
                }
            }
            let o = offspring.remove(pick);
            if pick_f < fit[pick_ip] {
                let before = in_cluster_count(&pop);
                let parent_fitness_value = fit[pick_ip];
                pop[pick_ip] = o;
                fit = parent_fitness(&pop).map_err(at(t + 1))?;
                replacements.push(Replacement {
                    iteration: t + 1,
                    slot: pick_ip,
                    parent_fitness: parent_fitness_value,
                    offspring_fitness: pick_f,
                    in_cluster_before: before,
                    in_cluster_after: in_cluster_count(&pop),
                });
            }
        }
        trace.push(trace_row(t + 1, &pop, &fit, evaluator.requests())?);
    }

    let in_cluster = pop.iter().filter(|p| p.eval.in_cluster()).cloned().collect();
    Ok(PairOutcome {
        in_cluster,
        population: pop,
        fitness: fit,
        trace,
        replacements,
    })
}
