use super::Observation;
use crate::error::{Error, Result};
use crate::param_space::cosine_distance;

/// One minus the distance to the nearest neighbor.
pub fn similarity<'a>(x: &[f64], neighbors: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
    let mut nearest = f64::INFINITY;
    let mut any = false;
    for n in neighbors {
        any = true;
        nearest = nearest.min(cosine_distance(x, n)?);
    }
    if !any {
        return Err(Error::Contract("similarity needs at least one neighbor".into()));
    }
    Ok(1.0 - nearest)
}

/// F1: similarity to the nearest neighbor when inside the cluster, the
/// cluster distance otherwise. Values ≤ 1 mean in-cluster.
pub fn fitness_f1<'a, O: Observation + ?Sized>(obs: &O, neighbors: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
    if obs.in_cluster() {
        similarity(obs.encoded(), neighbors)
    } else {
        Ok(obs.rcc_distance())
    }
}

/// Index of the closest reference and the distances to all of them. Ties go
/// to the lowest index.
pub fn closest_index(x: &[f64], refs: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    if refs.is_empty() {
        return Err(Error::Contract("empty reference population".into()));
    }
    let dist: Vec<f64> = refs.iter().map(|r| cosine_distance(x, r)).collect::<Result<_>>()?;
    let best = dist
        .iter()
        .enumerate()
        .fold(0, |b, (i, d)| if *d < dist[b] { i } else { b });
    Ok((best, dist))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F2Branch {
    ClosestFailing,
    ClosestCorrect,
    InClusterOther,
    OutOfCluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F3Branch {
    ClosestCorrect,
    ClosestFailing,
    Other,
}

/// F2 against every reference of P1 at once: entry t is the objective for
/// reference t.
pub fn fitness_f2<O: Observation + ?Sized>(obs: &O, p1: &[Vec<f64>]) -> Result<Vec<(f64, F2Branch)>> {
    let (closest, dist) = closest_index(obs.encoded(), p1)?;
    Ok((0..p1.len())
        .map(|t| {
            if !obs.in_cluster() {
                (3.0 + obs.rcc_distance(), F2Branch::OutOfCluster)
            } else if closest != t {
                (2.0 + dist[t], F2Branch::InClusterOther)
            } else if obs.failing() {
                (dist[t], F2Branch::ClosestFailing)
            } else {
                (1.0 + (1.0 - obs.entropy()), F2Branch::ClosestCorrect)
            }
        })
        .collect())
}

/// F3 against every reference of P2.
pub fn fitness_f3<O: Observation + ?Sized>(obs: &O, p2: &[Vec<f64>]) -> Result<Vec<(f64, F3Branch)>> {
    let (closest, dist) = closest_index(obs.encoded(), p2)?;
    Ok((0..p2.len())
        .map(|t| {
            if closest != t {
                (2.0 + dist[t], F3Branch::Other)
            } else if obs.failing() {
                (
                    1.0 + obs.entropy() + (1.0 - obs.rcc_distance()).abs(),
                    F3Branch::ClosestFailing,
                )
            } else {
                (dist[t], F3Branch::ClosestCorrect)
            }
        })
        .collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) struct Probe {
        pub rcc: f64,
        pub encoded: Vec<f64>,
        pub failing: bool,
        pub entropy: f64,
    }

    impl Observation for Probe {
        fn rcc_distance(&self) -> f64 {
            self.rcc
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

    fn probe(rcc: f64, encoded: Vec<f64>, failing: bool, entropy: f64) -> Probe {
        Probe {
            rcc,
            encoded,
            failing,
            entropy,
        }
    }

    #[test]
    fn f1_branches() {
        let out = probe(2.5, vec![1.0, 0.0], false, 0.0);
        assert_eq!(fitness_f1(&out, [&[0.0, 1.0][..]]).unwrap(), 2.5);
        let dup = probe(0.5, vec![1.0, 2.0], false, 0.0);
        assert_eq!(fitness_f1(&dup, [&[1.0, 2.0][..]]).unwrap(), 1.0);
        // cos = 0.7 between (1, 0) and (0.7, √0.51)
        let n = [0.7, 0.51f64.sqrt()];
        let i = probe(0.5, vec![1.0, 0.0], false, 0.0);
        assert!((fitness_f1(&i, [&n[..]]).unwrap() - 0.7).abs() < 1e-12);
        assert!(matches!(fitness_f1(&i, std::iter::empty()), Err(Error::Contract(_))));
    }

    #[test]
    fn f2_examples() {
        let refs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = probe(2.0, vec![1.0, 0.0], true, 0.3);
        assert_eq!(fitness_f2(&out, &refs).unwrap()[0], (5.0, F2Branch::OutOfCluster));
        let same = probe(0.4, vec![1.0, 0.0], true, 0.3);
        assert_eq!(fitness_f2(&same, &refs).unwrap()[0], (0.0, F2Branch::ClosestFailing));
        let correct = probe(0.4, vec![1.0, 0.0], false, 1.0);
        let f = fitness_f2(&correct, &refs).unwrap();
        assert_eq!(f[0], (1.0, F2Branch::ClosestCorrect));
        assert_eq!(f[1], (3.0, F2Branch::InClusterOther));
    }

    #[test]
    fn f3_examples() {
        let refs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let boundary = probe(1.0, vec![1.0, 0.0], true, 0.0);
        assert_eq!(fitness_f3(&boundary, &refs).unwrap()[0], (1.0, F3Branch::ClosestFailing));
        // 1 - cos = 0.2
        let x = [0.8, 0.36f64.sqrt()];
        let correct = probe(0.3, x.to_vec(), false, 0.9);
        let (v, b) = fitness_f3(&correct, &refs).unwrap()[0];
        assert_eq!(b, F3Branch::ClosestCorrect);
        assert!((v - 0.2).abs() < 1e-12);
        let far = probe(2.5, vec![1.0, 0.0], true, 0.6);
        let (v, b) = fitness_f3(&far, &refs).unwrap()[0];
        assert_eq!(b, F3Branch::ClosestFailing);
        assert!((v - 3.1).abs() < 1e-12);
        assert!(v > 2.0);
    }

    #[test]
    fn closest_ties_go_low() {
        let refs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(closest_index(&[1.0, 1.0], &refs).unwrap().0, 0);
        assert!(closest_index(&[1.0, 1.0], &[]).is_err());
    }
}
