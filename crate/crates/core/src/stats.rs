//! Metrics and statistical tests used by the evaluation harness.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::param_space::{chromosome_distance, Chromosome};

/// Largest |a|·|b| for which the U-test enumerates the exact null
/// distribution.
pub const EXACT_U_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diversity {
    pub value: f64,
    /// Set when fewer than two individuals were available.
    pub insufficient: bool,
}

/// Mean pairwise chromosome distance.
pub fn population_diversity(population: &[Chromosome]) -> Result<Diversity> {
    if population.len() < 2 {
        return Ok(Diversity {
            value: 0.0,
            insufficient: true,
        });
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for (i, a) in population.iter().enumerate() {
        for b in &population[i + 1..] {
            sum += chromosome_distance(a, b)?;
            pairs += 1;
        }
    }
    Ok(Diversity {
        value: sum / pairs as f64,
        insufficient: false,
    })
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance (divides by n).
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (divides by n - 1).
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Variance reduction rate: 1 − var(cluster) / var(random).
pub fn vrr(cluster: &[f64], random: &[f64]) -> Result<f64> {
    let denom = population_variance(random);
    if denom <= 0.0 {
        return Err(Error::Domain("random sample has zero variance".into()));
    }
    Ok(1.0 - population_variance(cluster) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided Mann-Whitney U test.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.len() < 3 || b.len() < 3 {
        return Err(Error::Contract(format!(
            "U-test needs at least 3 observations per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Domain("NaN observation".into()));
    }
    let doubled = doubled_midranks(a, b);
    let (na, nb) = (a.len(), b.len());
    let r2_a: u64 = doubled[..na].iter().sum();
    let u = (r2_a as f64 - (na * (na + 1)) as f64) / 2.0;
    let first = doubled[0];
    if doubled.iter().all(|&r| r == first) {
        return Ok(MannWhitney {
            u,
            p_value: 1.0,
            exact: na * nb <= EXACT_U_LIMIT,
        });
    }
    if na * nb <= EXACT_U_LIMIT {
        // enumerate subsets of the smaller sample; the p-value is symmetric
        let p_value = if na <= nb {
            exact_rank_sum_p(&doubled, na, r2_a)
        } else {
            exact_rank_sum_p(&doubled, nb, doubled[na..].iter().sum())
        };
        return Ok(MannWhitney {
            u,
            p_value,
            exact: true,
        });
    }
    let n = (na + nb) as f64;
    let ties: f64 = tie_groups(&doubled).iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let mu = (na * nb) as f64 / 2.0;
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
    };
    Ok(MannWhitney {
        u,
        p_value,
        exact: false,
    })
}

/// Twice the midranks of the pooled sample, `a` first then `b`.
fn doubled_midranks(a: &[f64], b: &[f64]) -> Vec<u64> {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1, doubled midrank = (i+1) + (j+1)
        let r2 = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = r2;
        }
        i = j + 1;
    }
    ranks
}

fn tie_groups(doubled: &[u64]) -> Vec<u64> {
    let mut sorted = doubled.to_vec();
    sorted.sort_unstable();
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        groups.push(j as u64);
        i += j;
    }
    groups
}

/// Exact two-sided p of the rank sum of `na` items drawn from `doubled`,
/// counting subsets whose distance from the null mean is at least the
/// observed one.
fn exact_rank_sum_p(doubled: &[u64], na: usize, observed: u64) -> f64 {
    let max_sum: u64 = {
        let mut s = doubled.to_vec();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s[..na].iter().sum()
    };
    let width = max_sum as usize + 1;
    // counts[k][s]: subsets of size k with doubled rank sum s
    let mut counts = vec![vec![0u128; width]; na + 1];
    counts[0][0] = 1;
    for &r in doubled {
        let r = r as usize;
        for k in (1..=na).rev() {
            let (lower, upper) = counts.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (r..width).rev() {
                if prev[s - r] != 0 {
                    cur[s] += prev[s - r];
                }
            }
        }
    }
    let total: u128 = counts[na].iter().sum();
    let n = doubled.len() as f64;
    // mean of the doubled rank sum: na·(n+1)
    let centre = na as f64 * (n + 1.0);
    let observed_dev = (observed as f64 - centre).abs();
    let extreme: u128 = counts[na]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as f64 - centre).abs() >= observed_dev - 1e-9)
        .map(|(_, c)| *c)
        .sum();
    (extreme as f64 / total as f64).min(1.0)
}

/// Vargha-Delaney Â12: probability that a draw from `a` beats one from `b`.
pub fn vargha_delaney_a12(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("Â12 of an empty sample".into()));
    }
    let mut score = 0.0;
    for x in a {
        for y in b {
            if x > y {
                score += 1.0;
            } else if x == y {
                score += 0.5;
            }
        }
    }
    Ok(score / (a.len() * b.len()) as f64)
}

/// Two-sided Fisher exact test on `[[a, b], [c, d]]`: total probability of
/// the tables with the observed margins that are no more likely than the
/// observed one.
pub fn fisher_exact(table: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = table;
    let row1 = a + b;
    let row2 = c + d;
    let col1 = a + c;
    let n = row1 + row2;
    if row1 == 0 || row2 == 0 || col1 == 0 || col1 == n {
        return 1.0;
    }
    let lo = col1.saturating_sub(row2);
    let hi = row1.min(col1);
    if let Some(p) = fisher_integer(row1, row2, col1, a, lo, hi) {
        return p;
    }
    let ln_fact = |k: u64| ln_gamma(k as f64 + 1.0);
    let constant = ln_fact(row1) + ln_fact(row2) + ln_fact(col1) + ln_fact(n - col1) - ln_fact(n);
    let prob = |x: u64| {
        (constant - ln_fact(x) - ln_fact(row1 - x) - ln_fact(col1 - x) - ln_fact(row2 + x - col1)).exp()
    };
    let observed = prob(a);
    let p: f64 = (lo..=hi)
        .map(prob)
        .filter(|&q| q <= observed * (1.0 + 1e-7))
        .sum();
    p.min(1.0)
}

/// Exact rational evaluation while the binomials fit in 128 bits.
fn fisher_integer(row1: u64, row2: u64, col1: u64, a: u64, lo: u64, hi: u64) -> Option<f64> {
    let weight = |x: u64| binomial(row1, x)?.checked_mul(binomial(row2, col1 - x)?);
    let observed = weight(a)?;
    let mut extreme = 0u128;
    let mut total = 0u128;
    for x in lo..=hi {
        let w = weight(x)?;
        total = total.checked_add(w)?;
        if w <= observed {
            extreme += w;
        }
    }
    let g = gcd(extreme, total);
    Some((extreme / g) as f64 / (total / g) as f64)
}

fn binomial(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(acc)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Values of one metric per run, aligned on a shared checkpoint axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub name: String,
    pub checkpoints: Vec<usize>,
    pub runs: Vec<Vec<f64>>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>, checkpoints: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            checkpoints,
            runs: Vec::new(),
        }
    }

    pub fn push_run(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.checkpoints.len() {
            return Err(Error::DimensionMismatch {
                expected: self.checkpoints.len(),
                actual: values.len(),
            });
        }
        self.runs.push(values);
        Ok(())
    }

    /// Values of every run at checkpoint position `i`.
    pub fn at(&self, i: usize) -> Vec<f64> {
        self.runs.iter().map(|r| r[i]).collect()
    }

    pub fn last(&self) -> Vec<f64> {
        self.checkpoints.len().checked_sub(1).map(|i| self.at(i)).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vrr_examples() {
        let random = [0.0, 2.0, 4.0, 6.0];
        assert_eq!(vrr(&random, &random).unwrap(), 0.0);
        assert_eq!(vrr(&[5.0, 5.0, 5.0], &random).unwrap(), 1.0);
        // half the variance: var(random) = 5, var([1, 1+√10]) = 2.5
        let half = [1.0, 1.0 + 10f64.sqrt()];
        assert!((vrr(&half, &random).unwrap() - 0.5).abs() < 1e-12);
        assert!(vrr(&[1.0], &[3.0, 3.0]).is_err());
    }

    #[test]
    fn u_test_examples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.exact);
        assert!((r.p_value - 0.1).abs() < 1e-12);
        let same = mann_whitney_u(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(same.p_value > 0.9);
        let tied = mann_whitney_u(&[2.0; 30], &[2.0; 30]).unwrap();
        assert_eq!(tied.p_value, 1.0);
        assert!(mann_whitney_u(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn a12_examples() {
        assert_eq!(vargha_delaney_a12(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(vargha_delaney_a12(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(vargha_delaney_a12(&[1.0, 2.0], &[2.0, 3.0]).unwrap(), 0.125);
        assert!(vargha_delaney_a12(&[], &[1.0]).is_err());
    }

    #[test]
    fn fisher_examples() {
        assert!((fisher_exact([[5, 0], [0, 5]]) - 2.0 / 252.0).abs() < 1e-12);
        assert!((fisher_exact([[2, 4], [3, 6]]) - 1.0).abs() < 1e-9);
        assert_eq!(fisher_exact([[0, 0], [3, 4]]), 1.0);
        assert_eq!(fisher_exact([[3, 7], [2, 9]]), fisher_exact([[3, 2], [7, 9]]));
    }

    #[test]
    fn series_alignment() {
        let mut s = MetricSeries::new("d", vec![10, 20]);
        assert!(s.push_run(vec![1.0]).is_err());
        s.push_run(vec![1.0, 2.0]).unwrap();
        assert_eq!(s.last(), vec![2.0]);
    }
}
