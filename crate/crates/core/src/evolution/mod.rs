//! Evolutionary search over simulator configurations: genetic operators,
//! nondominated sorting, both crowding variants, the NSGA-II loop, PaiR,
//! the three fitness families and the two baselines.

mod baseline;
mod crowding;
mod evaluator;
mod fitness;
mod nsga;
mod operators;
mod pair;
mod sorting;
mod step2;

use std::fmt;
use std::sync::Arc;

use crate::param_space::Chromosome;

pub use baseline::{deep_nsga2_baseline, nsga2_baseline, BaselineConfig, BaselineOutcome, DEEP_REPOPULATION};
pub use crowding::{crowding_distances, Crowding, CrowdingVariant};
pub use evaluator::{Evaluate, Evaluation, FnEvaluator, ModelEvaluator};
pub use fitness::{closest_index, fitness_f1, fitness_f2, fitness_f3, similarity, F2Branch, F3Branch};
pub use nsga::{nsga2, NsgaConfig, NsgaOutcome, Objectives, PerIndividual};
pub use operators::{make_offspring, mutate, sbx, tournament, MUTATION_ETA, SBX_ETA};
pub use pair::{pair_search, PairConfig, PairOutcome, PairTraceRow, Replacement};
pub use sorting::{dominates, fast_nondominated_sort};
pub use step2::{step2, Step2Config, Step2Outcome};

/// A chromosome together with everything derived from it.
pub struct Individual<E> {
    pub chromosome: Chromosome,
    pub eval: Arc<E>,
}

impl<E> Individual<E> {
    pub fn new(chromosome: Chromosome, eval: Arc<E>) -> Self {
        Self { chromosome, eval }
    }
}

impl<E> Clone for Individual<E> {
    fn clone(&self) -> Self {
        Self {
            chromosome: self.chromosome.clone(),
            eval: Arc::clone(&self.eval),
        }
    }
}

impl<E> fmt::Debug for Individual<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Individual").field("chromosome", &self.chromosome).finish()
    }
}

/// What the fitness functions need to know about an evaluated individual.
pub trait Observation: Send + Sync {
    /// Distance to the cluster medoid in units of the cluster radius.
    fn rcc_distance(&self) -> f64;
    /// Chromosome encoding the chromosome distance is computed on.
    fn encoded(&self) -> &[f64];
    fn failing(&self) -> bool;
    /// Normalized entropy of the model output.
    fn entropy(&self) -> f64;

    fn in_cluster(&self) -> bool {
        self.rcc_distance() <= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Pair,
    Nsga2,
    DeepNsga2,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Pair, Algorithm::Nsga2, Algorithm::DeepNsga2];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pair => "PaiR",
            Algorithm::Nsga2 => "NSGA-II",
            Algorithm::DeepNsga2 => "DeepNSGA-II",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Keeps the first occurrence of every distinct chromosome.
pub fn dedupe<E>(population: Vec<Individual<E>>) -> Vec<Individual<E>> {
    let mut seen = std::collections::HashSet::new();
    population
        .into_iter()
        .filter(|i| seen.insert(i.chromosome.key()))
        .collect()
}
