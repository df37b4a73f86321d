use super::crowding::{crowding_distances, CrowdingVariant};
use super::evaluator::Evaluate;
use super::operators::make_offspring;
use super::sorting::fast_nondominated_sort;
use super::Individual;
use crate::error::{Error, Result};
use crate::param_space::{random_chromosome, Chromosome};
use crate::seed;

/// Objective vectors (minimized) for a population.
///
/// `assess` sees the whole combined population so objectives may depend on
/// search state such as an archive; `observe` is told about every newly
/// evaluated individual.
pub trait Objectives<E> {
    fn count(&self) -> usize;

    fn assess(&mut self, population: &[Individual<E>]) -> Result<Vec<Vec<f64>>>;

    fn observe(&mut self, _new: &[Individual<E>]) -> Result<()> {
        Ok(())
    }
}

/// Objectives computed from each individual alone.
pub struct PerIndividual<F> {
    q: usize,
    f: F,
}

impl<F> PerIndividual<F> {
    pub fn new(q: usize, f: F) -> Self {
        Self { q, f }
    }
}

impl<E, F> Objectives<E> for PerIndividual<F>
where
    F: Fn(&Individual<E>) -> Result<Vec<f64>>,
{
    fn count(&self) -> usize {
        self.q
    }

    fn assess(&mut self, population: &[Individual<E>]) -> Result<Vec<Vec<f64>>> {
        population
            .iter()
            .map(|i| {
                let v = (self.f)(i)?;
                if v.len() != self.q {
                    return Err(Error::DimensionMismatch {
                        expected: self.q,
                        actual: v.len(),
                    });
                }
                Ok(v)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct NsgaConfig {
    /// M, the population size.
    pub population: usize,
    pub generations: usize,
    pub crossover: f64,
    pub mutation: f64,
    pub crowding: CrowdingVariant,
    /// Fraction of the population, ranked worst, replaced by random
    /// chromosomes after every generation. Zero disables it.
    pub repopulate: f64,
}

impl NsgaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("population size must be at least 2".into()));
        }
        for (name, p) in [("crossover", self.crossover), ("mutation", self.mutation), ("repopulate", self.repopulate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NsgaOutcome<E> {
    pub population: Vec<Individual<E>>,
    pub objectives: Vec<Vec<f64>>,
    /// Per-objective minimum over the population; entry 0 is the initial
    /// population, entry t the population after generation t.
    pub minima: Vec<Vec<f64>>,
    /// Evaluation requests made so far, parallel to `minima`.
    pub evaluations: Vec<usize>,
    pub generations: usize,
}

fn minima(objs: &[Vec<f64>], q: usize) -> Vec<f64> {
    (0..q)
        .map(|m| objs.iter().map(|o| o[m]).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Front rank and crowding distance of every individual.
fn rank_and_crowd(objs: &[Vec<f64>], variant: CrowdingVariant, rng: &mut seed::Rng) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut rank = vec![0; objs.len()];
    let mut crowd = vec![0.0; objs.len()];
    for (r, front) in fast_nondominated_sort(objs)?.iter().enumerate() {
        let c = crowding_distances(objs, front, variant, rng)?;
        for (pos, &i) in front.iter().enumerate() {
            rank[i] = r;
            crowd[i] = c.distances[pos];
        }
    }
    Ok((rank, crowd))
}

/// Indices of the `m` survivors of `objs`, front by front, splitting the
/// last front by crowding distance.
fn select(objs: &[Vec<f64>], m: usize, variant: CrowdingVariant, rng: &mut seed::Rng) -> Result<Vec<usize>> {
    let mut chosen = Vec::with_capacity(m);
    for front in fast_nondominated_sort(objs)? {
        if chosen.len() == m {
            break;
        }
        if chosen.len() + front.len() <= m {
            chosen.extend(front);
            continue;
        }
        let c = crowding_distances(objs, &front, variant, rng)?;
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| c.distances[b].total_cmp(&c.distances[a]));
        chosen.extend(order.into_iter().take(m - chosen.len()).map(|p| front[p]));
    }
    Ok(chosen)
}

/// Elitist μ+λ NSGA-II loop. With `CrowdingVariant::Modified` this is the
/// variant that never drops an objective's best individual.
///
/// Stops after `cfg.generations` or when the evaluator's budget runs out;
/// a final generation may be short if the budget does not divide evenly.
pub fn nsga2<V, O>(
    evaluator: &V,
    objectives: &mut O,
    initial: Vec<Chromosome>,
    cfg: &NsgaConfig,
    rng: &mut seed::Rng,
) -> Result<NsgaOutcome<V::Output>>
where
    V: Evaluate,
    O: Objectives<V::Output>,
{
    cfg.validate()?;
    let m = cfg.population;
    if initial.len() != m {
        return Err(Error::Contract(format!(
            "initial population has {} individuals, expected {m}",
            initial.len()
        )));
    }
    let q = objectives.count();
    if q == 0 {
        return Err(Error::Contract("at least one objective is required".into()));
    }
    if evaluator.remaining().is_some_and(|r| r < m) {
        return Err(Error::Contract("budget smaller than the initial population".into()));
    }
    let space = initial[0].space().clone();
    let mut pop = evaluator.individuals(initial)?;
    objectives.observe(&pop)?;
    let mut objs = objectives.assess(&pop)?;
    let (mut rank, mut crowd) = rank_and_crowd(&objs, cfg.crowding, rng)?;
    let mut out_minima = vec![minima(&objs, q)];
    let mut evaluations = vec![evaluator.requests()];
    let mut generations = 0;

    for _ in 0..cfg.generations {
        let count = evaluator.remaining().map_or(m, |r| r.min(m));
        if count == 0 {
            break;
        }
        let parents: Vec<Chromosome> = pop.iter().map(|i| i.chromosome.clone()).collect();
        let kids = make_offspring(&parents, count, cfg.crossover, cfg.mutation, rng, |a, b| {
            rank[a] < rank[b] || (rank[a] == rank[b] && crowd[a] > crowd[b])
        });
        let kids = evaluator.individuals(kids)?;
        objectives.observe(&kids)?;
        let mut union = pop;
        union.extend(kids);
        let union_objs = objectives.assess(&union)?;
        let chosen = select(&union_objs, m, cfg.crowding, rng)?;
        pop = chosen.iter().map(|&i| union[i].clone()).collect();
        objs = chosen.iter().map(|&i| union_objs[i].clone()).collect();

        if cfg.repopulate > 0.0 {
            let (r, c) = rank_and_crowd(&objs, cfg.crowding, rng)?;
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| r[a].cmp(&r[b]).then(c[b].total_cmp(&c[a])));
            let wanted = (cfg.repopulate * m as f64).ceil() as usize;
            let n = evaluator.remaining().map_or(wanted, |rem| rem.min(wanted));
            if n > 0 {
                let fresh: Vec<Chromosome> = (0..n).map(|_| random_chromosome(&space, rng)).collect();
                let fresh = evaluator.individuals(fresh)?;
                objectives.observe(&fresh)?;
                for (slot, ind) in order[m - n..].iter().zip(fresh) {
                    pop[*slot] = ind;
                }
                objs = objectives.assess(&pop)?;
            }
        }

        (rank, crowd) = rank_and_crowd(&objs, cfg.crowding, rng)?;
        out_minima.push(minima(&objs, q));
        evaluations.push(evaluator.requests());
        generations += 1;
    }

    Ok(NsgaOutcome {
        population: pop,
        objectives: objs,
        minima: out_minima,
        evaluations,
        generations,
    })
}
