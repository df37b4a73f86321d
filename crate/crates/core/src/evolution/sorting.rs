use crate::error::{Error, Result};

/// `a` dominates `b` under minimization.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Deb's fast nondominated sort. Returns fronts of indices into `objs`,
/// best first; indices within a front are ascending.
pub fn fast_nondominated_sort(objs: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
    let n = objs.len();
    if let Some(q) = objs.first().map(Vec::len) {
        for (i, o) in objs.iter().enumerate() {
            if o.len() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    actual: o.len(),
                });
            }
            if o.iter().any(|v| v.is_nan()) {
                return Err(Error::Contract(format!("NaN objective for individual {i}")));
            }
        }
    }
    let mut dominated: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&objs[i], &objs[j]) {
                dominated[i].push(j);
                count[j] += 1;
            } else if dominates(&objs[j], &objs[i]) {
                dominated[j].push(i);
                count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated[i] {
                count[j] -= 1;
                if count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Ok(fronts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_pair() {
        assert_eq!(fast_nondominated_sort(&[vec![1.0, 2.0]]).unwrap(), vec![vec![0]]);
        let fronts = fast_nondominated_sort(&[vec![2.0, 2.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(fronts, vec![vec![1], vec![0]]);
    }

    #[test]
    fn equal_points_share_a_front() {
        let fronts = fast_nondominated_sort(&[vec![1.0], vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(fronts, vec![vec![2], vec![0, 1]]);
    }

    #[test]
    fn nan_is_rejected() {
        assert!(matches!(
            fast_nondominated_sort(&[vec![f64::NAN], vec![1.0]]),
            Err(Error::Contract(_))
        ));
    }
}
