//! The four steps end to end, plus the harness comparing search
//! algorithms.
//!
//! Seeds: every random stream is derived from the master seed along a
//! labelled path (see [`crate::seed`]): `pools/{training,field,test}`,
//! `model/{init,train}`, `cluster/<id>/{search,evaluate,vrr}`,
//! `compare/<algorithm>/<cluster>` indexed by run, `retrain/<run>/...`.

mod compare;
mod config;
mod report;

use std::sync::Arc;

use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;

use crate::clustering::{cluster_failures, ClusteringResult, RootCauseCluster, MIN_FAILURES};
use crate::error::{Error, Result};
use crate::evolution::{step2, Evaluation, Individual, ModelEvaluator, Step2Outcome};
use crate::neural::{DenseNet, Heatmap, LabeledInput, TrainOptions};
use crate::param_space::{random_chromosome, Chromosome};
use crate::retrain::{build_unsafe_set, retrain, Pools, RetrainOutcome};
use crate::rules::{compile_expression, learn_part, sample_expression, DecisionList, Example, Outcome, UnsafeExpression};
use crate::seed;
use crate::simulator::{ground_truth_failure, scenario, ModelOutput, RenderedSample, Simulator};
use crate::stats::{fisher_exact, population_diversity, vrr};

pub use compare::{compare_search_algorithms, AlgorithmSummary, Comparison, ComparisonRun};
pub use config::{ClusteringConfig, CompareConfig, Config, EvaluateConfig, ModelConfig};
pub use report::{write_artifacts, PipelineReport};

/// Simulator, model under analysis and the data around it.
pub struct Setup {
    pub simulator: Arc<dyn Simulator>,
    pub model: DenseNet,
    pub pools: Pools,
    /// Rendered test set, parallel to `pools.test`.
    pub test: Vec<RenderedSample>,
}

fn labeled(s: &RenderedSample) -> Result<LabeledInput> {
    Ok(LabeledInput {
        input: s.input.clone(),
        label: s.class()?,
    })
}

fn render_all(sim: &dyn Simulator, chromosomes: Vec<Chromosome>) -> Result<Vec<RenderedSample>> {
    chromosomes.par_iter().map(|c| sim.render(c)).collect()
}

/// Draws the training, field and test pools.
pub fn build_pools(sim: &dyn Simulator, cfg: &ModelConfig, master: u64) -> Result<(Pools, Vec<RenderedSample>)> {
    let mut rng = seed::rng(seed::derive(master, &["pools", "training"]));
    let training: Vec<Chromosome> = (0..cfg.training_size).map(|_| sim.sample_training(&mut rng)).collect();
    let mut rng = seed::rng(seed::derive(master, &["pools", "field"]));
    let field: Vec<Chromosome> = (0..cfg.field_size).map(|_| sim.sample_field(&mut rng)).collect();
    let mut rng = seed::rng(seed::derive(master, &["pools", "test"]));
    let test: Vec<Chromosome> = (0..cfg.test_size).map(|_| random_chromosome(sim.space(), &mut rng)).collect();
    let to_labeled = |v: Vec<RenderedSample>| v.iter().map(labeled).collect::<Result<Vec<_>>>();
    let test = render_all(sim, test)?;
    let pools = Pools {
        simulator: to_labeled(render_all(sim, training)?)?,
        field: to_labeled(render_all(sim, field)?)?,
        test: test.iter().map(labeled).collect::<Result<_>>()?,
    };
    Ok((pools, test))
}

/// Trains the model under analysis on the simulator and field pools.
pub fn train_model(sim: &dyn Simulator, pools: &Pools, cfg: &ModelConfig, master: u64) -> Result<DenseNet> {
    let mut sizes = vec![sim.config().input_dim];
    sizes.extend(&cfg.hidden);
    sizes.push(sim.config().class_count()?);
    let net = DenseNet::random(&sizes, &mut seed::rng(seed::derive(master, &["model", "init"])))?;
    let mut data = pools.simulator.clone();
    data.extend(pools.field.iter().cloned());
    let opts = TrainOptions {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        seed: seed::derive(master, &["model", "train"]),
    };
    Ok(net.train(&data, &opts)?.net)
}

/// Builds the pools and trains or loads the model.
pub fn prepare(cfg: &Config) -> Result<Setup> {
    cfg.validate()?;
    let simulator = scenario(&cfg.scenario)?;
    let (pools, test) = build_pools(simulator.as_ref(), &cfg.model, cfg.seed)?;
    let model = match &cfg.model.path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            DenseNet::from_text(&text)?
        }
        None => train_model(simulator.as_ref(), &pools, &cfg.model, cfg.seed)?,
    };
    if model.input_dim() != simulator.config().input_dim {
        return Err(Error::DimensionMismatch {
            expected: simulator.config().input_dim,
            actual: model.input_dim(),
        });
    }
    Ok(Setup {
        simulator,
        model,
        pools,
        test,
    })
}

/// Step 1: failing test inputs and their root cause clusters.
#[derive(Debug, Clone)]
pub struct FailureAnalysis {
    pub test_accuracy: f64,
    /// Indices into the test set.
    pub failing: Vec<usize>,
    /// `None` when there are too few failures to cluster.
    pub clustering: Option<ClusteringResult>,
}

pub fn analyse_failures(setup: &Setup, cfg: &ClusteringConfig) -> Result<FailureAnalysis> {
    let sim = setup.simulator.as_ref();
    let per_input: Vec<Option<Vec<Heatmap>>> = setup
        .test
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let pass = setup.model.forward(&s.input)?;
            let failing = ground_truth_failure(sim.config(), s, &ModelOutput::Class(pass.predicted_class()))?;
            Ok(failing.then(|| setup.model.lrp_all(&pass, cfg.lrp_epsilon, &format!("test:{i}"))))
        })
        .collect::<Result<_>>()?;
    let mut failing = Vec::new();
    let mut heatmaps = Vec::new();
    for (i, h) in per_input.into_iter().enumerate() {
        if let Some(h) = h {
            failing.push(i);
            heatmaps.push(h);
        }
    }
    let test_accuracy = 1.0 - failing.len() as f64 / setup.test.len() as f64;
    let clustering = if failing.len() < MIN_FAILURES {
        None
    } else {
        Some(cluster_failures(&failing, &heatmaps, cfg.max_k)?)
    };
    Ok(FailureAnalysis {
        test_accuracy,
        failing,
        clustering,
    })
}

/// Accuracy inside an unsafe expression against a random input set.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceEvaluation {
    pub samples: usize,
    pub inside_correct: usize,
    pub random_correct: usize,
    pub inside_accuracy: f64,
    pub random_accuracy: f64,
    pub p_value: f64,
}

fn correct_count(sim: &dyn Simulator, model: &DenseNet, chromosomes: &[Chromosome]) -> Result<usize> {
    let flags: Vec<bool> = chromosomes
        .par_iter()
        .map(|c| {
            let s = sim.render(c)?;
            let pred = model.forward(&s.input)?.predicted_class();
            Ok(!ground_truth_failure(sim.config(), &s, &ModelOutput::Class(pred))?)
        })
        .collect::<Result<_>>()?;
    Ok(flags.into_iter().filter(|f| *f).count())
}

/// Model accuracy on `n` inputs sampled from the expression and on `n`
/// uniformly random inputs, with Fisher's exact test on the 2×2 table.
pub fn evaluate_unsafe_space(
    expr: &UnsafeExpression,
    n: usize,
    sim: &dyn Simulator,
    model: &DenseNet,
    rng: &mut seed::Rng,
) -> Result<SpaceEvaluation> {
    if n == 0 {
        return Err(Error::Contract("unsafe-space evaluation needs at least one sample".into()));
    }
    let inside = sample_expression(expr, sim.space(), n, rng)?;
    let random: Vec<Chromosome> = (0..n).map(|_| random_chromosome(sim.space(), rng)).collect();
    let inside_correct = correct_count(sim, model, &inside)?;
    let random_correct = correct_count(sim, model, &random)?;
    let p_value = fisher_exact([
        [inside_correct as u64, (n - inside_correct) as u64],
        [random_correct as u64, (n - random_correct) as u64],
    ]);
    Ok(SpaceEvaluation {
        samples: n,
        inside_correct,
        random_correct,
        inside_accuracy: inside_correct as f64 / n as f64,
        random_accuracy: random_correct as f64 / n as f64,
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClusterStatus {
    Characterized,
    /// PaiR found no individual inside the cluster.
    Uncoverable,
    /// Searched, but no usable expression came out.
    Uncharacterizable(String),
    /// A step failed for this cluster.
    Failed(String),
}

impl ClusterStatus {
    pub fn label(&self) -> &'static str {
        match self {
            ClusterStatus::Characterized => "characterized",
            ClusterStatus::Uncoverable => "uncoverable",
            ClusterStatus::Uncharacterizable(_) => "uncharacterizable",
            ClusterStatus::Failed(_) => "failed",
        }
    }
}

/// Steps 2 and 3 for one cluster.
#[derive(Debug, Clone)]
pub struct ClusterExplanation {
    pub cluster: RootCauseCluster,
    pub status: ClusterStatus,
    pub search: Option<Step2Outcome<Evaluation>>,
    pub simulations: usize,
    /// Mean pairwise distance among P1.
    pub diversity: f64,
    pub list: Option<DecisionList>,
    pub expression: Option<UnsafeExpression>,
    /// Per parameter, in space order.
    pub vrr: Vec<(String, f64)>,
    pub space: Option<SpaceEvaluation>,
}

impl ClusterExplanation {
    pub fn id(&self) -> usize {
        self.cluster.id
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        self.search.as_ref().map_or((0, 0, 0), |s| {
            (s.pair.in_cluster.len(), s.unsafe_set.len(), s.safe_set.len())
        })
    }
}

fn chromosomes(pop: &[Individual<Evaluation>]) -> Vec<Chromosome> {
    pop.iter().map(|i| i.chromosome.clone()).collect()
}

/// A training point the list gets right must not be mislabelled by the
/// expression.
fn check_faithful(list: &DecisionList, expr: &UnsafeExpression, examples: &[Example]) -> Result<()> {
    for e in examples {
        if expr.eval(&e.chromosome)? && list.predict(&e.chromosome)? != Outcome::Error {
            return Err(Error::Contract("expression marks a point the list calls correct".into()));
        }
    }
    Ok(())
}

fn explain_cluster(setup: &Setup, cluster: &RootCauseCluster, cfg: &Config) -> Result<ClusterExplanation> {
    let sim = setup.simulator.as_ref();
    let mut out = ClusterExplanation {
        cluster: cluster.clone(),
        status: ClusterStatus::Uncoverable,
        search: None,
        simulations: 0,
        diversity: 0.0,
        list: None,
        expression: None,
        vrr: Vec::new(),
        space: None,
    };
    if cluster.degenerate {
        out.status = ClusterStatus::Uncharacterizable("degenerate cluster".into());
        return Ok(out);
    }
    let evaluator = ModelEvaluator::new(sim, &setup.model, cluster, cfg.clustering.lrp_epsilon, None)?;
    let id = cluster.id.to_string();
    let mut rng = seed::rng(seed::derive(cfg.seed, &["cluster", &id, "search"]));
    let search = step2(&evaluator, sim.space(), &cfg.pair, &cfg.step2, cluster.id, &mut rng)?;
    out.simulations = evaluator.simulations();
    out.diversity = population_diversity(&chromosomes(&search.pair.in_cluster))?.value;
    let uncoverable = search.uncoverable();
    let p2 = chromosomes(&search.unsafe_set);
    let examples: Vec<Example> = search
        .unsafe_set
        .iter()
        .map(|i| Example {
            chromosome: i.chromosome.clone(),
            error: true,
        })
        .chain(search.safe_set.iter().map(|i| Example {
            chromosome: i.chromosome.clone(),
            error: false,
        }))
        .collect();
    out.search = Some(search);
    if uncoverable {
        return Ok(out);
    }
    if p2.is_empty() {
        out.status = ClusterStatus::Uncharacterizable("no unsafe individuals in the cluster".into());
        return Ok(out);
    }

    let mut rng = seed::rng(seed::derive(cfg.seed, &["cluster", &id, "vrr"]));
    let random: Vec<Chromosome> = (0..cfg.evaluate.samples).map(|_| random_chromosome(sim.space(), &mut rng)).collect();
    for (k, spec) in sim.space().specs().iter().enumerate() {
        let inside: Vec<f64> = p2.iter().map(|c| c.values()[k]).collect();
        let base: Vec<f64> = random.iter().map(|c| c.values()[k]).collect();
        out.vrr.push((spec.name.clone(), vrr(&inside, &base)?));
    }

    let list = match learn_part(&examples, &cfg.rules) {
        Ok(l) => l,
        Err(Error::Contract(msg)) => {
            out.status = ClusterStatus::Uncharacterizable(msg);
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let expr = match compile_expression(&list, &p2) {
        Ok(e) => e,
        Err(Error::EmptyExpression) => {
            out.status = ClusterStatus::Uncharacterizable("decision list predicts no failure".into());
            out.list = Some(list);
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    check_faithful(&list, &expr, &examples)?;
    let mut rng = seed::rng(seed::derive(cfg.seed, &["cluster", &id, "evaluate"]));
    match evaluate_unsafe_space(&expr, cfg.evaluate.samples, sim, &setup.model, &mut rng) {
        Ok(space) => {
            out.space = Some(space);
            out.status = ClusterStatus::Characterized;
        }
        Err(Error::Unsatisfiable(msg)) => out.status = ClusterStatus::Uncharacterizable(msg),
        Err(e) => return Err(e),
    }
    out.list = Some(list);
    out.expression = Some(expr);
    Ok(out)
}

/// Steps 2 and 3 for every cluster, in parallel. A failing cluster is
/// reported, not fatal.
pub fn explain_clusters(setup: &Setup, clusters: &[RootCauseCluster], cfg: &Config) -> Vec<ClusterExplanation> {
    clusters
        .par_iter()
        .map(|c| {
            explain_cluster(setup, c, cfg).unwrap_or_else(|e| {
                warn!("cluster {}: {e}", c.id);
                ClusterExplanation {
                    cluster: c.clone(),
                    status: ClusterStatus::Failed(e.to_string()),
                    search: None,
                    simulations: 0,
                    diversity: 0.0,
                    list: None,
                    expression: None,
                    vrr: Vec::new(),
                    space: None,
                }
            })
        })
        .collect()
}

/// SEDE retraining next to retraining on as many random inputs.
#[derive(Debug, Clone)]
pub struct RetrainComparison {
    pub original_accuracy: f64,
    pub unsafe_samples: usize,
    pub sede: RetrainOutcome,
    pub random: RetrainOutcome,
}

impl RetrainComparison {
    pub fn gain(&self) -> f64 {
        self.sede.best_accuracy - self.random.best_accuracy
    }
}

/// Step 4 for one run: improvement set from the expressions, then the same
/// retraining with uniformly random inputs instead.
pub fn retrain_step(
    setup: &Setup,
    expressions: &[(usize, UnsafeExpression)],
    cfg: &Config,
    run: u64,
) -> Result<Option<RetrainComparison>> {
    let sim = setup.simulator.as_ref();
    let master = seed::derive_indexed(cfg.seed, &["retrain"], run);
    let set = build_unsafe_set(expressions, cfg.retrain.unsafe_per_cluster, sim, master)?;
    if set.samples.is_empty() {
        return Ok(None);
    }
    let improvement = set.labeled()?;
    let mut rng = seed::rng(seed::derive(master, &["random-set"]));
    let random: Vec<Chromosome> = (0..improvement.len()).map(|_| random_chromosome(sim.space(), &mut rng)).collect();
    let random: Vec<LabeledInput> = render_all(sim, random)?.iter().map(labeled).collect::<Result<_>>()?;
    // both arms subsample the pools identically
    let mix = rng.gen();
    let sede = retrain(&setup.model, &setup.pools, &improvement, &cfg.retrain, mix)?;
    let random = retrain(&setup.model, &setup.pools, &random, &cfg.retrain, mix)?;
    Ok(Some(RetrainComparison {
        original_accuracy: setup.model.accuracy(&setup.pools.test)?,
        unsafe_samples: improvement.len(),
        sede,
        random,
    }))
}

/// Expressions of the characterized clusters.
pub fn expressions(explanations: &[ClusterExplanation]) -> Vec<(usize, UnsafeExpression)> {
    explanations
        .iter()
        .filter(|e| e.status == ClusterStatus::Characterized)
        .filter_map(|e| e.expression.clone().map(|x| (e.id(), x)))
        .collect()
}

/// Steps 1 to 4.
pub fn run_pipeline(cfg: &Config) -> Result<(Setup, PipelineReport)> {
    let setup = prepare(cfg)?;
    let report = run_prepared(&setup, cfg)?;
    Ok((setup, report))
}

pub fn run_prepared(setup: &Setup, cfg: &Config) -> Result<PipelineReport> {
    let failures = analyse_failures(setup, &cfg.clustering)?;
    info!(
        "test accuracy {:.3}, {} failures",
        failures.test_accuracy,
        failures.failing.len()
    );
    let explanations = match &failures.clustering {
        Some(c) => explain_clusters(setup, &c.clusters, cfg),
        None => Vec::new(),
    };
    let exprs = expressions(&explanations);
    let retraining = if exprs.is_empty() { None } else { retrain_step(setup, &exprs, cfg, 0)? };
    Ok(PipelineReport {
        scenario: cfg.scenario.clone(),
        seed: cfg.seed,
        failures,
        explanations,
        retraining,
    })
}
