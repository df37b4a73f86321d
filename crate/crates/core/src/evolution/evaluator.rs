use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::{Individual, Observation};
use crate::clustering::RootCauseCluster;
use crate::error::{Error, Result};
use crate::neural::{normalized_entropy, DenseNet, Heatmap};
use crate::param_space::{encode, Chromosome};
use crate::simulator::{ground_truth_failure, ModelOutput, RenderedSample, Simulator};

/// Turns chromosomes into evaluations and keeps count of the requests.
///
/// Every requested chromosome counts toward the budget, cached or not, so
/// algorithms compared at the same budget see the same number of
/// individuals.
pub trait Evaluate: Sync {
    type Output: Send + Sync;

    /// Evaluates in parallel; the result order matches the input order.
    fn evaluate_many(&self, chromosomes: &[Chromosome]) -> Result<Vec<Arc<Self::Output>>>;

    fn requests(&self) -> usize;

    fn budget(&self) -> Option<usize>;

    fn remaining(&self) -> Option<usize> {
        self.budget().map(|b| b.saturating_sub(self.requests()))
    }

    fn individuals(&self, chromosomes: Vec<Chromosome>) -> Result<Vec<Individual<Self::Output>>> {
        let evals = self.evaluate_many(&chromosomes)?;
        Ok(chromosomes.into_iter().zip(evals).map(|(c, e)| Individual::new(c, e)).collect())
    }
}

#[derive(Debug)]
struct Counter {
    requests: AtomicUsize,
    budget: Option<usize>,
}

impl Counter {
    fn new(budget: Option<usize>) -> Self {
        Self {
            requests: AtomicUsize::new(0),
            budget,
        }
    }

    fn charge(&self, n: usize) -> Result<()> {
        let before = self.requests.fetch_add(n, Ordering::SeqCst);
        match self.budget {
            Some(b) if before + n > b => Err(Error::Contract(format!(
                "evaluation budget of {b} exceeded ({} requested)",
                before + n
            ))),
            _ => Ok(()),
        }
    }

    fn get(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

/// Evaluator backed by a plain function, without caching.
pub struct FnEvaluator<F> {
    f: F,
    counter: Counter,
}

impl<F> FnEvaluator<F> {
    pub fn new(f: F) -> Self {
        Self {
            f,
            counter: Counter::new(None),
        }
    }

    pub fn with_budget(f: F, budget: usize) -> Self {
        Self {
            f,
            counter: Counter::new(Some(budget)),
        }
    }
}

impl<F, T> Evaluate for FnEvaluator<F>
where
    F: Fn(&Chromosome) -> Result<T> + Sync,
    T: Send + Sync,
{
    type Output = T;

    fn evaluate_many(&self, chromosomes: &[Chromosome]) -> Result<Vec<Arc<T>>> {
        self.counter.charge(chromosomes.len())?;
        chromosomes.par_iter().map(|c| (self.f)(c).map(Arc::new)).collect()
    }

    fn requests(&self) -> usize {
        self.counter.get()
    }

    fn budget(&self) -> Option<usize> {
        self.counter.budget
    }
}

/// Everything the search needs about one rendered configuration.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub sample: RenderedSample,
    pub probabilities: Vec<f64>,
    pub predicted: usize,
    pub failing: bool,
    pub entropy: f64,
    /// Relevance at the cluster's layer.
    pub heatmap: Heatmap,
    pub encoded: Vec<f64>,
    pub rcc_distance: f64,
}

impl Observation for Evaluation {
    fn rcc_distance(&self) -> f64 {
        self.rcc_distance
    }

    fn encoded(&self) -> &[f64] {
        &self.encoded
    }

    fn failing(&self) -> bool {
        self.failing
    }

    fn entropy(&self) -> f64 {
        self.entropy
    }
}

/// Render → forward → LRP against one root cause cluster, cached per
/// distinct chromosome.
pub struct ModelEvaluator<'a> {
    simulator: &'a dyn Simulator,
    model: &'a DenseNet,
    cluster: &'a RootCauseCluster,
    epsilon: f64,
    cache: Mutex<HashMap<Vec<u64>, Arc<Evaluation>>>,
    counter: Counter,
    simulations: AtomicUsize,
}

impl<'a> ModelEvaluator<'a> {
    pub fn new(
        simulator: &'a dyn Simulator,
        model: &'a DenseNet,
        cluster: &'a RootCauseCluster,
        epsilon: f64,
        budget: Option<usize>,
    ) -> Result<Self> {
        if cluster.degenerate {
            return Err(Error::DegenerateCluster(cluster.id));
        }
        if cluster.layer >= model.heatmap_layers() {
            return Err(Error::Contract(format!(
                "cluster layer {} but the model has {} heatmap layers",
                cluster.layer,
                model.heatmap_layers()
            )));
        }
        Ok(Self {
            simulator,
            model,
            cluster,
            epsilon,
            cache: Mutex::new(HashMap::new()),
            counter: Counter::new(budget),
            simulations: AtomicUsize::new(0),
        })
    }

    pub fn cluster(&self) -> &RootCauseCluster {
        self.cluster
    }

    /// Distinct chromosomes actually rendered.
    pub fn simulations(&self) -> usize {
        self.simulations.load(Ordering::SeqCst)
    }

    fn evaluate_one(&self, c: &Chromosome) -> Result<Evaluation> {
        let sample = self.simulator.render(c)?;
        let pass = self.model.forward(&sample.input)?;
        let predicted = pass.predicted_class();
        let failing = ground_truth_failure(self.simulator.config(), &sample, &ModelOutput::Class(predicted))?;
        let heatmap = self.model.lrp_from_pass(&pass, self.cluster.layer, self.epsilon, "search")?;
        let rcc_distance = self.cluster.rcc_distance(&heatmap)?;
        Ok(Evaluation {
            entropy: normalized_entropy(&pass.probabilities),
            probabilities: pass.probabilities,
            predicted,
            failing,
            heatmap,
            encoded: encode(c)?,
            rcc_distance,
            sample,
        })
    }
}

impl Evaluate for ModelEvaluator<'_> {
    type Output = Evaluation;

    fn evaluate_many(&self, chromosomes: &[Chromosome]) -> Result<Vec<Arc<Evaluation>>> {
        self.counter.charge(chromosomes.len())?;
        let mut missing: Vec<&Chromosome> = Vec::new();
        {
            let cache = self.cache.lock().expect("evaluation cache poisoned");
            let mut queued = std::collections::HashSet::new();
            for c in chromosomes {
                let key = c.key();
                if !cache.contains_key(&key) && queued.insert(key) {
                    missing.push(c);
                }
            }
        }
        let fresh: Vec<(Vec<u64>, Evaluation)> = missing
            .par_iter()
            .map(|c| self.evaluate_one(c).map(|e| (c.key(), e)))
            .collect::<Result<_>>()?;
        self.simulations.fetch_add(fresh.len(), Ordering::SeqCst);
        let mut cache = self.cache.lock().expect("evaluation cache poisoned");
        for (k, e) in fresh {
            cache.insert(k, Arc::new(e));
        }
        Ok(chromosomes.iter().map(|c| Arc::clone(&cache[&c.key()])).collect())
    }

    fn requests(&self) -> usize {
        self.counter.get()
    }

    fn budget(&self) -> Option<usize> {
        self.counter.budget
    }
}
