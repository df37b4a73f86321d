use rayon::prelude::*;

use super::{chromosomes, Config, Setup};
use crate::clustering::RootCauseCluster;
use crate::error::{Error, Result};
use crate::evolution::{
    deep_nsga2_baseline, nsga2_baseline, pair_search, Algorithm, BaselineConfig, Evaluate, Evaluation, Individual,
    ModelEvaluator, Observation, PairConfig,
};
use crate::seed;
use crate::stats::{fisher_exact, mann_whitney_u, mean, population_diversity, std_dev, vargha_delaney_a12, MetricSeries};

/// One algorithm run on one cluster, stopped at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRun {
    pub algorithm: Algorithm,
    pub cluster: usize,
    pub run: usize,
    pub checkpoint: usize,
    pub evaluations: usize,
    /// Size of the returned set the percentages refer to (s).
    pub population: usize,
    pub in_cluster: usize,
    /// Mean pairwise distance among the returned in-cluster individuals.
    pub diversity: f64,
}

impl ComparisonRun {
    pub fn in_cluster_pct(&self) -> f64 {
        100.0 * self.in_cluster as f64 / self.population as f64
    }

    pub fn covered(&self) -> bool {
        self.in_cluster > 0
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    /// Evaluation budget at each checkpoint.
    pub budgets: Vec<usize>,
    pub clusters: Vec<usize>,
    pub seeds: usize,
    pub runs: Vec<ComparisonRun>,
}

/// Metrics of one algorithm at one checkpoint, with tests against PaiR.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub checkpoint: usize,
    pub budget: usize,
    pub diversity_mean: f64,
    pub diversity_std: f64,
    pub in_cluster_mean: f64,
    pub in_cluster_std: f64,
    /// Covered (cluster, run) pairs out of `total`.
    pub covered: usize,
    pub total: usize,
    /// PaiR against this algorithm; `None` for PaiR itself.
    pub diversity_p: Option<f64>,
    pub diversity_a12: Option<f64>,
    pub in_cluster_p: Option<f64>,
    pub in_cluster_a12: Option<f64>,
    pub coverage_p: Option<f64>,
}

impl Comparison {
    /// Runs of one algorithm at one checkpoint, ordered by cluster then run.
    pub fn select(&self, algorithm: Algorithm, checkpoint: usize) -> Vec<&ComparisonRun> {
        self.runs
            .iter()
            .filter(|r| r.algorithm == algorithm && r.checkpoint == checkpoint)
            .collect()
    }

    pub fn final_checkpoint(&self) -> usize {
        self.budgets.len() - 1
    }

    /// `diversity` or `in_cluster` per (cluster, run), across checkpoints.
    pub fn series(&self, algorithm: Algorithm, metric: &str) -> Result<MetricSeries> {
        let pick = |r: &ComparisonRun| match metric {
            "diversity" => Ok(r.diversity),
            "in_cluster" => Ok(r.in_cluster_pct()),
            other => Err(Error::Contract(format!("unknown metric `{other}`"))),
        };
        let mut series = MetricSeries::new(format!("{algorithm} {metric}"), self.budgets.clone());
        for &c in &self.clusters {
            for run in 0..self.seeds {
                let values = (0..self.budgets.len())
                    .map(|k| {
                        let r = self
                            .runs
                            .iter()
                            .find(|r| r.algorithm == algorithm && r.cluster == c && r.run == run && r.checkpoint == k)
                            .ok_or_else(|| Error::Contract("missing comparison run".into()))?;
                        pick(r)
                    })
                    .collect::<Result<Vec<_>>>()?;
                series.push_run(values)?;
            }
        }
        Ok(series)
    }

    /// Mean in-cluster percentage of one algorithm on one cluster.
    pub fn cluster_in_cluster_pct(&self, algorithm: Algorithm, cluster: usize, checkpoint: usize) -> f64 {
        let v: Vec<f64> = self
            .select(algorithm, checkpoint)
            .into_iter()
            .filter(|r| r.cluster == cluster)
            .map(ComparisonRun::in_cluster_pct)
            .collect();
        mean(&v)
    }

    /// Clusters covered in at least one run.
    pub fn covered_clusters(&self, algorithm: Algorithm, checkpoint: usize) -> usize {
        self.clusters
            .iter()
            .filter(|&&c| self.select(algorithm, checkpoint).iter().any(|r| r.cluster == c && r.covered()))
            .count()
    }

    pub fn summary(&self, checkpoint: usize) -> Result<Vec<AlgorithmSummary>> {
        let pair = self.select(Algorithm::Pair, checkpoint);
        let pair_div: Vec<f64> = pair.iter().map(|r| r.diversity).collect();
        let pair_in: Vec<f64> = pair.iter().map(|r| r.in_cluster_pct()).collect();
        let pair_cov = pair.iter().filter(|r| r.covered()).count();
        let mut out = Vec::new();
        for alg in Algorithm::ALL {
            let runs = self.select(alg, checkpoint);
            let div: Vec<f64> = runs.iter().map(|r| r.diversity).collect();
            let inc: Vec<f64> = runs.iter().map(|r| r.in_cluster_pct()).collect();
            let covered = runs.iter().filter(|r| r.covered()).count();
            let total = runs.len();
            let versus = alg != Algorithm::Pair && pair_div.len() >= 3 && div.len() >= 3;
            let test = |a: &[f64], b: &[f64]| -> Result<(Option<f64>, Option<f64>)> {
                if !versus {
                    return Ok((None, None));
                }
                Ok((Some(mann_whitney_u(a, b)?.p_value), Some(vargha_delaney_a12(a, b)?)))
            };
            let (diversity_p, diversity_a12) = test(&pair_div, &div)?;
            let (in_cluster_p, in_cluster_a12) = test(&pair_in, &inc)?;
            let coverage_p = versus.then(|| {
                fisher_exact([
                    [pair_cov as u64, (pair.len() - pair_cov) as u64],
                    [covered as u64, (total - covered) as u64],
                ])
            });
            out.push(AlgorithmSummary {
                algorithm: alg,
                checkpoint,
                budget: self.budgets[checkpoint],
                diversity_mean: mean(&div),
                diversity_std: std_dev(&div),
                in_cluster_mean: mean(&inc),
                in_cluster_std: std_dev(&inc),
                covered,
                total,
                diversity_p,
                diversity_a12,
                in_cluster_p,
                in_cluster_a12,
                coverage_p,
            });
        }
        Ok(out)
    }
}

fn measure(returned: &[Individual<Evaluation>], population: usize) -> Result<(usize, f64)> {
    let inside: Vec<Individual<Evaluation>> = returned.iter().filter(|i| i.eval.in_cluster()).cloned().collect();
    let diversity = population_diversity(&chromosomes(&inside))?.value;
    Ok((inside.len().min(population), diversity))
}

/// PaiR iterations at checkpoint `k` of `count`.
fn iterations_at(pair: &PairConfig, k: usize, count: usize) -> usize {
    (pair.iterations * (k + 1)).div_ceil(count)
}

fn run_one(
    setup: &Setup,
    cluster: &RootCauseCluster,
    algorithm: Algorithm,
    run: usize,
    checkpoint: usize,
    cfg: &Config,
) -> Result<ComparisonRun> {
    let sim = setup.simulator.as_ref();
    let pair = PairConfig {
        iterations: iterations_at(&cfg.pair, checkpoint, cfg.compare.checkpoints),
        ..cfg.pair.clone()
    };
    let budget = pair.budget();
    let evaluator = ModelEvaluator::new(sim, &setup.model, cluster, cfg.clustering.lrp_epsilon, Some(budget))?;
    let mut rng = seed::rng(seed::derive_indexed(
        cfg.seed,
        &["compare", algorithm.name(), &cluster.id.to_string()],
        run as u64,
    ));
    let baseline = BaselineConfig {
        population: pair.population,
        budget,
        crossover: pair.crossover,
        mutation: pair.mutation,
    };
    let (in_cluster, diversity) = match algorithm {
        Algorithm::Pair => measure(&pair_search(&evaluator, sim.space(), &pair, cluster.id, &mut rng)?.population, pair.population)?,
        Algorithm::Nsga2 => measure(&nsga2_baseline(&evaluator, sim.space(), &baseline, &mut rng)?.selected, pair.population)?,
        Algorithm::DeepNsga2 => {
            measure(&deep_nsga2_baseline(&evaluator, sim.space(), &baseline, &mut rng)?.selected, pair.population)?
        }
    };
    Ok(ComparisonRun {
        algorithm,
        cluster: cluster.id,
        run,
        checkpoint,
        evaluations: evaluator.requests(),
        population: pair.population,
        in_cluster,
        diversity,
    })
}

/// Runs PaiR, NSGA-II and DeepNSGA-II on every searchable cluster with the
/// same evaluation budget, `cfg.compare.seeds` times each. Checkpoint `k`
/// reruns every algorithm with the budget PaiR uses for the first
/// `(k+1)/checkpoints` of its iterations.
pub fn compare_search_algorithms(setup: &Setup, clusters: &[RootCauseCluster], cfg: &Config) -> Result<Comparison> {
    cfg.validate()?;
    let clusters: Vec<&RootCauseCluster> = clusters.iter().filter(|c| !c.degenerate).collect();
    let checkpoints = cfg.compare.checkpoints;
    let budgets: Vec<usize> = (0..checkpoints)
        .map(|k| {
            PairConfig {
                iterations: iterations_at(&cfg.pair, k, checkpoints),
                ..cfg.pair.clone()
            }
            .budget()
        })
        .collect();
    let mut tasks = Vec::new();
    for alg in Algorithm::ALL {
        for c in &clusters {
            for run in 0..cfg.compare.seeds {
                for k in 0..checkpoints {
                    tasks.push((alg, *c, run, k));
                }
            }
        }
    }
    let runs: Vec<ComparisonRun> = tasks
        .par_iter()
        .map(|&(alg, c, run, k)| run_one(setup, c, alg, run, k, cfg))
        .collect::<Result<_>>()?;
    for r in &runs {
        if r.evaluations != budgets[r.checkpoint] {
            return Err(Error::Contract(format!(
                "{} used {} evaluations, budget {}",
                r.algorithm, r.evaluations, budgets[r.checkpoint]
            )));
        }
    }
    Ok(Comparison {
        budgets,
        clusters: clusters.iter().map(|c| c.id).collect(),
        seeds: cfg.compare.seeds,
        runs,
    })
}
