use proptest::prelude::*;
use sede::param_space::{chromosome_distance, Chromosome, ParameterSpace, ParameterSpec};
use sede::stats::{fisher_exact, mann_whitney_u, population_diversity, vargha_delaney_a12};

/// Twice the U statistic of `a` by direct pair counting.
fn doubled_u(a: &[f64], b: &[f64]) -> i64 {
    let mut u = 0;
    for x in a {
        for y in b {
            if x > y {
                u += 2;
            } else if x == y {
                u += 1;
            }
        }
    }
    u
}

/// Exact two-sided p by enumerating every split of the pooled sample.
fn u_oracle(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let centre = (a.len() * b.len()) as i64;
    let observed = (doubled_u(a, b) - centre).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (i, v) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    x.push(*v);
                } else {
                    y.push(*v);
                }
            }
            (x, y)
        };
        total += 1;
        if (doubled_u(&x, &y) - centre).abs() >= observed {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Fisher p by counting which subsets of the n items land in column one.
fn fisher_oracle(t: [[u64; 2]; 2]) -> f64 {
    let row1 = (t[0][0] + t[0][1]) as usize;
    let n = row1 + (t[1][0] + t[1][1]) as usize;
    let col1 = (t[0][0] + t[1][0]) as usize;
    let mut by_x = vec![0u64; row1 + 1];
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == col1 {
            let x = (0..row1).filter(|i| mask & (1 << i) != 0).count();
            by_x[x] += 1;
        }
    }
    let observed = by_x[t[0][0] as usize];
    let total: u64 = by_x.iter().sum();
    let extreme: u64 = by_x.iter().filter(|&&c| c > 0 && c <= observed).sum();
    extreme as f64 / total as f64
}

#[test]
fn u_test_matches_enumeration() {
    let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
        (vec![1.0, 2.0, 3.0], vec![10.0, 11.0, 12.0]),
        (vec![1.0, 5.0, 3.0, 8.0], vec![2.0, 4.0, 9.0]),
        (vec![1.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 2.0, 4.0, 5.0]),
        (vec![0.3, 0.3, 0.3], vec![0.3, 0.1, 0.9, 0.3]),
        (vec![4.0, 4.0, 1.0, 7.0, 7.0, 2.0], vec![3.0, 4.0, 7.0, 5.0, 6.0, 1.0]),
    ];
    for (a, b) in cases {
        let got = mann_whitney_u(&a, &b).unwrap();
        assert!(got.exact);
        assert_eq!(got.p_value, u_oracle(&a, &b), "{a:?} {b:?}");
        assert_eq!(2.0 * got.u, doubled_u(&a, &b) as f64);
    }
}

#[test]
fn fisher_matches_enumeration() {
    for a in 0..5u64 {
        for b in 0..4u64 {
            for c in 0..4u64 {
                for d in 0..5u64 {
                    let t = [[a, b], [c, d]];
                    let n = a + b + c + d;
                    if n == 0 || a + b == 0 || c + d == 0 || a + c == 0 || b + d == 0 {
                        assert_eq!(fisher_exact(t), 1.0);
                        continue;
                    }
                    assert_eq!(fisher_exact(t), fisher_oracle(t), "{t:?}");
                }
            }
        }
    }
}

#[test]
fn a12_matches_enumeration() {
    let a = [1.0, 2.0, 2.0, 5.0];
    let b = [2.0, 3.0, 0.5];
    let mut wins = 0u64;
    for x in &a {
        for y in &b {
            wins += if x > y { 2 } else if x == y { 1 } else { 0 };
        }
    }
    assert_eq!(vargha_delaney_a12(&a, &b).unwrap(), wins as f64 / (2 * a.len() * b.len()) as f64);
}

#[test]
fn diversity_of_a_triple_is_mean_of_three_pairs() {
    let space = ParameterSpace::new(vec![ParameterSpec::continuous("a", 0.0, 1.0), ParameterSpec::continuous("b", 0.0, 1.0)]).unwrap();
    let c = |x: f64, y: f64| Chromosome::new(&space, vec![x, y]).unwrap();
    let p = vec![c(0.1, 0.9), c(0.7, 0.2), c(0.4, 0.4)];
    let expected = (chromosome_distance(&p[0], &p[1]).unwrap()
        + chromosome_distance(&p[0], &p[2]).unwrap()
        + chromosome_distance(&p[1], &p[2]).unwrap())
        / 3.0;
    assert!((population_diversity(&p).unwrap().value - expected).abs() < 1e-15);
    let same = vec![c(0.5, 0.5), c(0.5, 0.5)];
    assert_eq!(population_diversity(&same).unwrap().value, 0.0);
    let single = population_diversity(&p[..1]).unwrap();
    assert!(single.insufficient && single.value == 0.0);
    let pair = population_diversity(&p[..2]).unwrap().value;
    assert_eq!(pair, chromosome_distance(&p[0], &p[1]).unwrap());
}

#[test]
fn normal_approximation_on_large_samples() {
    let a: Vec<f64> = (0..40).map(|i| i as f64).collect();
    let b: Vec<f64> = (0..40).map(|i| i as f64 + 20.0).collect();
    let r = mann_whitney_u(&a, &b).unwrap();
    assert!(!r.exact);
    assert!(r.p_value < 0.001);
    let same = mann_whitney_u(&a, &a).unwrap();
    assert!(same.p_value > 0.9);
}

proptest! {
    #[test]
    fn u_test_is_symmetric(a in prop::collection::vec(0u8..6, 3..9), b in prop::collection::vec(0u8..6, 3..9)) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let ab = mann_whitney_u(&a, &b).unwrap().p_value;
        let ba = mann_whitney_u(&b, &a).unwrap().p_value;
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn a12_duality(a in prop::collection::vec(0u8..6, 1..9), b in prop::collection::vec(0u8..6, 1..9)) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let s = vargha_delaney_a12(&a, &b).unwrap() + vargha_delaney_a12(&b, &a).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fisher_is_transpose_invariant(a in 0u64..30, b in 0u64..30, c in 0u64..30, d in 0u64..30) {
        prop_assert_eq!(fisher_exact([[a, b], [c, d]]), fisher_exact([[a, c], [b, d]]));
    }
}
