use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrowdingVariant {
    /// Both extremes of every objective get infinite distance.
    Original,
    /// Only one minimizer per objective gets infinite distance, chosen at
    /// random among ties.
    Modified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crowding {
    /// Parallel to the front.
    pub distances: Vec<f64>,
    /// For each objective, the front positions it made infinite.
    pub infinite_by_objective: Vec<Vec<usize>>,
}

/// Crowding distance of the individuals `front` (indices into `objs`).
pub fn crowding_distances<R: Rng + ?Sized>(
    objs: &[Vec<f64>],
    front: &[usize],
    variant: CrowdingVariant,
    rng: &mut R,
) -> Result<Crowding> {
    if front.is_empty() {
        return Err(Error::Contract("crowding distance of an empty front".into()));
    }
    let l = front.len();
    let q = objs[front[0]].len();
    let mut distances = vec![0.0; l];
    let mut infinite_by_objective = Vec::with_capacity(q);
    for m in 0..q {
        let value = |pos: usize| objs[front[pos]][m];
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)));
        let mut infinite = Vec::new();
        match variant {
            CrowdingVariant::Original => {
                infinite.push(order[0]);
                if l > 1 {
                    infinite.push(order[l - 1]);
                }
            }
            CrowdingVariant::Modified => {
                let ties = order.iter().take_while(|&&p| value(p) == value(order[0])).count();
                let pick = rng.gen_range(0..ties);
                order.swap(0, pick);
                infinite.push(order[0]);
            }
        }
        for &p in &infinite {
            distances[p] = f64::INFINITY;
        }
        let range = value(order[l - 1]) - value(order[0]);
        if range > 0.0 {
            for i in 1..l.saturating_sub(1) {
                distances[order[i]] += (value(order[i + 1]) - value(order[i - 1])) / range;
            }
        }
        infinite_by_objective.push(infinite);
    }
    Ok(Crowding {
        distances,
        infinite_by_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn singleton_front_is_infinite() {
        let mut rng = seed::rng(0);
        for v in [CrowdingVariant::Original, CrowdingVariant::Modified] {
            let c = crowding_distances(&[vec![1.0, 2.0]], &[0], v, &mut rng).unwrap();
            assert_eq!(c.distances, vec![f64::INFINITY]);
        }
    }

    #[test]
    fn modified_marks_one_per_objective() {
        let mut rng = seed::rng(1);
        let objs = vec![vec![3.0], vec![1.0], vec![2.0]];
        let c = crowding_distances(&objs, &[0, 1, 2], CrowdingVariant::Modified, &mut rng).unwrap();
        assert_eq!(c.infinite_by_objective, vec![vec![1]]);
        assert_eq!(c.distances.iter().filter(|d| d.is_infinite()).count(), 1);
    }

    #[test]
    fn modified_breaks_ties_randomly() {
        let objs = vec![vec![0.0], vec![0.0], vec![1.0]];
        let mut seen = [false; 2];
        for s in 0..64 {
            let mut rng = seed::rng(s);
            let c = crowding_distances(&objs, &[0, 1, 2], CrowdingVariant::Modified, &mut rng).unwrap();
            seen[c.infinite_by_objective[0][0]] = true;
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn zero_range_contributes_nothing() {
        let mut rng = seed::rng(2);
        let objs = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]];
        let c = crowding_distances(&objs, &[0, 1, 2], CrowdingVariant::Original, &mut rng).unwrap();
        assert_eq!(c.distances[1], 1.0);
    }
}
