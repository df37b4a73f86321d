use rand::Rng;

use crate::param_space::{Chromosome, ParameterSpec};

/// Distribution index of simulated binary crossover.
pub const SBX_ETA: f64 = 15.0;
/// Distribution index of polynomial mutation.
pub const MUTATION_ETA: f64 = 20.0;

/// Binary tournament over `0..n`. `better(a, b)` says whether `a` beats `b`;
/// on a tie the first draw wins.
pub fn tournament<R: Rng + ?Sized>(n: usize, rng: &mut R, better: impl Fn(usize, usize) -> bool) -> usize {
    assert!(n > 0, "tournament over an empty population");
    let a = rng.gen_range(0..n);
    if n == 1 {
        return a;
    }
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    if better(b, a) {
        b
    } else {
        a
    }
}

fn sbx_gene<R: Rng + ?Sized>(x1: f64, x2: f64, lo: f64, hi: f64, rng: &mut R) -> (f64, f64) {
    if (x1 - x2).abs() <= 1e-14 {
        return (x1, x2);
    }
    let (y1, y2) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    let u: f64 = rng.gen();
    let exp = 1.0 / (SBX_ETA + 1.0);
    let spread = |beta: f64| {
        let alpha = 2.0 - beta.powf(-(SBX_ETA + 1.0));
        if u <= 1.0 / alpha {
            (u * alpha).powf(exp)
        } else {
            (1.0 / (2.0 - u * alpha)).powf(exp)
        }
    };
    let bq1 = spread(1.0 + 2.0 * (y1 - lo) / (y2 - y1));
    let bq2 = spread(1.0 + 2.0 * (hi - y2) / (y2 - y1));
    let c1 = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(lo, hi);
    let c2 = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(lo, hi);
    if rng.gen::<bool>() {
        (c2, c1)
    } else {
        (c1, c2)
    }
}

/// Bounded simulated binary crossover. Each gene crosses with probability
/// 1/2; categorical genes are swapped instead.
pub fn sbx<R: Rng + ?Sized>(a: &Chromosome, b: &Chromosome, rng: &mut R) -> (Chromosome, Chromosome) {
    let space = a.space();
    let mut ca = a.values().to_vec();
    let mut cb = b.values().to_vec();
    for (p, spec) in space.specs().iter().enumerate() {
        if !rng.gen_bool(0.5) {
            continue;
        }
        if spec.is_categorical() {
            std::mem::swap(&mut ca[p], &mut cb[p]);
        } else {
            let (x, y) = sbx_gene(ca[p], cb[p], spec.lower, spec.upper, rng);
            ca[p] = x;
            cb[p] = y;
        }
    }
    (Chromosome::repaired(space, ca), Chromosome::repaired(space, cb))
}

fn mutate_gene<R: Rng + ?Sized>(spec: &ParameterSpec, y: f64, rng: &mut R) -> f64 {
    if let Some(levels) = spec.levels() {
        let current = y as usize;
        let mut other = rng.gen_range(0..levels.len() - 1);
        if other >= current {
            other += 1;
        }
        return other as f64;
    }
    let (lo, hi) = (spec.lower, spec.upper);
    let d1 = (y - lo) / (hi - lo);
    let d2 = (hi - y) / (hi - lo);
    let u: f64 = rng.gen();
    let pow = 1.0 / (MUTATION_ETA + 1.0);
    let dq = if u <= 0.5 {
        let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(MUTATION_ETA + 1.0);
        v.powf(pow) - 1.0
    } else {
        let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(MUTATION_ETA + 1.0);
        1.0 - v.powf(pow)
    };
    (y + dq * (hi - lo)).clamp(lo, hi)
}

/// Polynomial mutation with per-gene rate 1/n; at least one gene changes.
pub fn mutate<R: Rng + ?Sized>(c: &Chromosome, rng: &mut R) -> Chromosome {
    let space = c.space();
    let n = space.len();
    let mut values = c.values().to_vec();
    let mut chosen: Vec<usize> = (0..n).filter(|_| rng.gen::<f64>() < 1.0 / n as f64).collect();
    if chosen.is_empty() {
        chosen.push(rng.gen_range(0..n));
    }
    for p in chosen {
        values[p] = mutate_gene(space.spec(p), values[p], rng);
    }
    Chromosome::repaired(space, values)
}

/// `count` offspring: tournament-selected pairs, crossed with probability
/// `p_c`, each child mutated with probability `p_m`.
pub fn make_offspring<R: Rng + ?Sized>(
    parents: &[Chromosome],
    count: usize,
    p_c: f64,
    p_m: f64,
    rng: &mut R,
    better: impl Fn(usize, usize) -> bool,
) -> Vec<Chromosome> {
    let mut out = Vec::with_capacity(count + 1);
    while out.len() < count {
        let a = tournament(parents.len(), rng, &better);
        let b = tournament(parents.len(), rng, &better);
        let (x, y) = if rng.gen::<f64>() < p_c {
            sbx(&parents[a], &parents[b], rng)
        } else {
            (parents[a].clone(), parents[b].clone())
        };
        for child in [x, y] {
            let child = if rng.gen::<f64>() < p_m { mutate(&child, rng) } else { child };
            out.push(child);
        }
    }
    out.truncate(count);
    out
}
