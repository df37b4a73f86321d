//! Root cause clusters: agglomerative clustering of failure heatmaps per
//! layer, knee-point selection of the cluster count and layer choice.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::neural::Heatmap;

pub const MIN_FAILURES: usize = 3;

/// Euclidean norm of the entrywise difference.
pub fn heatmap_distance(a: &Heatmap, b: &Heatmap) -> Result<f64> {
    if a.layer != b.layer {
        return Err(Error::Contract(format!("heatmaps from layers {} and {}", a.layer, b.layer)));
    }
    if a.rows != b.rows || a.cols != b.cols || a.values.len() != b.values.len() {
        return Err(Error::DimensionMismatch {
            expected: a.values.len(),
            actual: b.values.len(),
        });
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone)]
pub struct RootCauseCluster {
    pub id: usize,
    pub layer: usize,
    /// Input identifiers of the members.
    pub members: Vec<usize>,
    /// Heatmaps of the members at `layer`, parallel to `members`.
    pub heatmaps: Vec<Heatmap>,
    /// Position of the medoid within `members`.
    pub medoid: usize,
    pub radius: f64,
    /// Set when all members coincide (radius 0); such clusters cannot be
    /// searched.
    pub degenerate: bool,
}

impl RootCauseCluster {
    /// Builds a cluster, computing medoid and radius from the members.
    pub fn new(id: usize, layer: usize, members: Vec<usize>, heatmaps: Vec<Heatmap>) -> Result<Self> {
        if members.is_empty() || members.len() != heatmaps.len() {
            return Err(Error::Contract("cluster needs one heatmap per member".into()));
        }
        let dist = distance_matrix(&heatmaps)?;
        let idx: Vec<usize> = (0..members.len()).collect();
        let medoid = medoid_of(&dist, &idx);
        let radius = idx.iter().map(|&j| dist[medoid][j]).fold(0.0, f64::max);
        let degenerate = radius == 0.0;
        let radius = if degenerate {
            let norm = heatmaps[medoid].values.iter().map(|v| v * v).sum::<f64>().sqrt();
            f64::EPSILON * norm.max(1.0)
        } else {
            radius
        };
        Ok(Self {
            id,
            layer,
            members,
            heatmaps,
            medoid,
            radius,
            degenerate,
        })
    }

    pub fn medoid_heatmap(&self) -> &Heatmap {
        &self.heatmaps[self.medoid]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Distance to the medoid in units of the radius.
    pub fn rcc_distance(&self, h: &Heatmap) -> Result<f64> {
        if self.degenerate {
            return Err(Error::DegenerateCluster(self.id));
        }
        if h.layer != self.layer {
            return Err(Error::Contract(format!(
                "heatmap from layer {} for cluster at layer {}",
                h.layer, self.layer
            )));
        }
        Ok(heatmap_distance(h, self.medoid_heatmap())? / self.radius)
    }

    pub fn contains(&self, h: &Heatmap) -> Result<bool> {
        Ok(self.rcc_distance(h)? <= 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct LayerSummary {
    pub layer: usize,
    /// Weighted intra-cluster distance for k = 1..=max_k.
    pub icd_curve: Vec<f64>,
    pub knee: usize,
}

impl LayerSummary {
    pub fn icd_at_knee(&self) -> f64 {
        self.icd_curve[self.knee - 1]
    }

    /// icd at the knee relative to the single-cluster icd; `None` when the
    /// layer has no spread at all.
    pub fn relative_icd(&self) -> Option<f64> {
        let base = self.icd_curve[0];
        (base > 0.0).then(|| self.icd_at_knee() / base)
    }
}

#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub clusters: Vec<RootCauseCluster>,
    pub layer: usize,
    pub k: usize,
    pub weighted_icd: f64,
    pub layers: Vec<LayerSummary>,
}

/// Symmetric matrix of pairwise heatmap distances.
pub fn distance_matrix(heatmaps: &[Heatmap]) -> Result<Vec<Vec<f64>>> {
    let n = heatmaps.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if j > i { heatmap_distance(&heatmaps[i], &heatmaps[j]) } else { Ok(0.0) })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut d = rows;
    for i in 0..n {
        for j in 0..i {
            d[i][j] = d[j][i];
        }
    }
    Ok(d)
}

/// Member (from `idx`) with the smallest mean distance to the others;
/// the first one wins ties. Returns a position into `idx`.
pub fn medoid_of(dist: &[Vec<f64>], idx: &[usize]) -> usize {
    let mut best = 0;
    let mut best_sum = f64::INFINITY;
    for (pos, &i) in idx.iter().enumerate() {
        let sum: f64 = idx.iter().map(|&j| dist[i][j]).sum();
        if sum < best_sum {
            best_sum = sum;
            best = pos;
        }
    }
    best
}

/// Σ_c (|c|/N) · mean pairwise distance within c.
pub fn weighted_icd(dist: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = labels.len();
    if n == 0 {
        return 0.0;
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups
        .iter()
        .filter(|g| g.len() > 1)
        .map(|g| {
            let mut sum = 0.0;
            for (a, &i) in g.iter().enumerate() {
                for &j in &g[a + 1..] {
                    sum += dist[i][j];
                }
            }
            let pairs = (g.len() * (g.len() - 1) / 2) as f64;
            (g.len() as f64 / n as f64) * sum / pairs
        })
        .sum()
}

/// Average-linkage agglomeration. Returns the flat partition for every
/// cluster count 1..=max_k as label vectors (labels numbered by first
/// appearance).
pub fn agglomerate(dist: &[Vec<f64>], max_k: usize) -> Vec<Vec<usize>> {
    let n = dist.len();
    if n == 0 {
        return Vec::new();
    }
    let max_k = max_k.clamp(1, n);
    let mut linkage: Vec<Vec<f64>> = dist.to_vec();
    let mut size = vec![1usize; n];
    let mut alive = vec![true; n];
    // owner[i] = representative cluster of input i
    let mut owner: Vec<usize> = (0..n).collect();
    let mut partitions: Vec<Option<Vec<usize>>> = vec![None; max_k];
    let mut clusters = n;
    if clusters <= max_k {
        partitions[clusters - 1] = Some(relabel(&owner));
    }
    while clusters > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if alive[j] && linkage[i][j] < best.0 {
                    best = (linkage[i][j], i, j);
                }
            }
        }
        let (_, a, b) = best;
        // Lance-Williams update for average linkage
        let (sa, sb) = (size[a] as f64, size[b] as f64);
        for m in 0..n {
            if alive[m] && m != a && m != b {
                let v = (sa * linkage[a][m] + sb * linkage[b][m]) / (sa + sb);
                linkage[a][m] = v;
                linkage[m][a] = v;
            }
        }
        size[a] += size[b];
        alive[b] = false;
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
        clusters -= 1;
        if clusters <= max_k {
            partitions[clusters - 1] = Some(relabel(&owner));
        }
    }
    partitions.into_iter().map(|p| p.expect("every k recorded")).collect()
}

fn relabel(owner: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    owner
        .iter()
        .map(|o| {
            let next = map.len();
            *map.entry(*o).or_insert(next)
        })
        .collect()
}

/// Kneedle-style knee: the k whose point lies farthest below the chord from
/// the first to the last point, both axes scaled to [0, 1]. Returns 1 when
/// no point lies below the chord.
pub fn knee(curve: &[f64]) -> usize {
    let n = curve.len();
    if n < 3 {
        return if n == 2 && curve[1] < curve[0] { 2 } else { 1 };
    }
    let (y0, y1) = (curve[0], curve[n - 1]);
    let hi = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi - lo <= 0.0 {
        return 1;
    }
    let scale = |y: f64| (y - lo) / (hi - lo);
    let (sy0, sy1) = (scale(y0), scale(y1));
    let mut best = (0.0, 1);
    for (i, &y) in curve.iter().enumerate() {
        let x = i as f64 / (n - 1) as f64;
        let chord = sy0 + (sy1 - sy0) * x;
        // vertical gap is proportional to the perpendicular distance
        let gap = chord - scale(y);
        if gap > best.0 + 1e-12 {
            best = (gap, i + 1);
        }
    }
    best.1
}

/// Clusters failing inputs. `heatmaps[i][l]` is the heatmap of input `ids[i]`
/// at layer `l`.
pub fn cluster_failures(ids: &[usize], heatmaps: &[Vec<Heatmap>], max_k: Option<usize>) -> Result<ClusteringResult> {
    let n = ids.len();
    if n < MIN_FAILURES {
        return Err(Error::InsufficientFailures {
            needed: MIN_FAILURES,
            got: n,
        });
    }
    if heatmaps.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: heatmaps.len(),
        });
    }
    let layers = heatmaps[0].len();
    if layers == 0 || heatmaps.iter().any(|h| h.len() != layers) {
        return Err(Error::Contract("every input needs a heatmap for every layer".into()));
    }
    let max_k = max_k.unwrap_or(10).min(n - 1).max(1);

    let per_layer: Vec<(LayerSummary, Vec<Vec<usize>>)> = (0..layers)
        .into_par_iter()
        .map(|l| {
            let maps: Vec<Heatmap> = heatmaps.iter().map(|h| h[l].clone()).collect();
            let dist = distance_matrix(&maps)?;
            let partitions = agglomerate(&dist, max_k);
            let icd_curve: Vec<f64> = partitions.iter().map(|p| weighted_icd(&dist, p)).collect();
            let k = knee(&icd_curve);
            Ok((LayerSummary { layer: l, icd_curve, knee: k }, partitions))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut chosen = 0;
    let mut best_ratio = f64::INFINITY;
    for (l, (summary, _)) in per_layer.iter().enumerate() {
        if let Some(r) = summary.relative_icd() {
            if r < best_ratio {
                best_ratio = r;
                chosen = l;
            }
        }
    }
    let summary = &per_layer[chosen].0;
    let k = summary.knee;
    let labels = &per_layer[chosen].1[k - 1];
    let mut clusters = Vec::with_capacity(k);
    for c in 0..k {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        clusters.push(RootCauseCluster::new(
            c,
            chosen,
            idx.iter().map(|&i| ids[i]).collect(),
            idx.iter().map(|&i| heatmaps[i][chosen].clone()).collect(),
        )?);
    }
    Ok(ClusteringResult {
        clusters,
        layer: chosen,
        k,
        weighted_icd: summary.icd_at_knee(),
        layers: per_layer.into_iter().map(|(s, _)| s).collect(),
    })
}

/// One row per member: input id, cluster id, layer, distance to medoid.
pub fn write_assignments<W: Write>(result: &ClusteringResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["input_id", "cluster_id", "layer", "distance_to_medoid"])?;
    let mut rows = Vec::new();
    for c in &result.clusters {
        for (m, h) in c.members.iter().zip(&c.heatmaps) {
            rows.push((*m, c.id, c.layer, heatmap_distance(h, c.medoid_heatmap())?));
        }
    }
    rows.sort_by_key(|r| r.0);
    for (id, cid, layer, d) in rows {
        w.write_record([id.to_string(), cid.to_string(), layer.to_string(), d.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<assignments>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Heatmap {
        Heatmap::column(0, values.to_vec(), "t")
    }

    #[test]
    fn distance_examples() {
        assert_eq!(heatmap_distance(&col(&[1.0, 2.0]), &col(&[1.0, 2.0])).unwrap(), 0.0);
        assert!((heatmap_distance(&col(&[1.0, 0.0]), &col(&[0.0, 1.0])).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(heatmap_distance(&col(&[1.0]), &col(&[0.0, 1.0])).is_err());
        let other = Heatmap::column(1, vec![1.0, 0.0], "t");
        assert!(heatmap_distance(&col(&[1.0, 0.0]), &other).is_err());
    }

    #[test]
    fn rcc_distance_examples() {
        let maps = vec![col(&[0.0, 0.0]), col(&[1.0, 0.0]), col(&[-1.0, 0.0]), col(&[0.0, 0.5])];
        let c = RootCauseCluster::new(0, 0, vec![0, 1, 2, 3], maps).unwrap();
        assert_eq!(c.medoid, 0);
        assert_eq!(c.radius, 1.0);
        assert_eq!(c.rcc_distance(&col(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(c.rcc_distance(&col(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(c.rcc_distance(&col(&[2.0, 0.0])).unwrap(), 2.0);
    }

    #[test]
    fn degenerate_cluster_is_flagged() {
        let c = RootCauseCluster::new(4, 0, vec![0, 1], vec![col(&[1.0]), col(&[1.0])]).unwrap();
        assert!(c.degenerate);
        assert!(c.radius > 0.0);
        assert!(matches!(c.rcc_distance(&col(&[1.0])), Err(Error::DegenerateCluster(4))));
    }

    #[test]
    fn identical_heatmaps_give_one_cluster() {
        let maps: Vec<Vec<Heatmap>> = (0..6).map(|_| vec![col(&[0.3, 0.1])]).collect();
        let r = cluster_failures(&[0, 1, 2, 3, 4, 5], &maps, None).unwrap();
        assert_eq!(r.k, 1);
        assert_eq!(r.weighted_icd, 0.0);
    }

    #[test]
    fn too_few_failures() {
        let maps: Vec<Vec<Heatmap>> = (0..2).map(|_| vec![col(&[0.3])]).collect();
        assert!(matches!(
            cluster_failures(&[0, 1], &maps, None),
            Err(Error::InsufficientFailures { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn knee_examples() {
        assert_eq!(knee(&[10.0, 2.0, 1.5, 1.2, 1.0]), 2);
        assert_eq!(knee(&[0.0, 0.0, 0.0]), 1);
        assert_eq!(knee(&[5.0]), 1);
    }

    #[test]
    fn weighted_icd_hand_computed() {
        // points on a line: 0, 1, 3 ; groups {0,1}, {3}
        let d = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 2.0], vec![3.0, 2.0, 0.0]];
        assert!((weighted_icd(&d, &[0, 0, 1]) - 2.0 / 3.0).abs() < 1e-15);
        assert!((weighted_icd(&d, &[0, 0, 0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn agglomerate_line() {
        let pts = [0.0, 0.1, 5.0, 5.2, 20.0];
        let d: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| f64::abs(a - b)).collect()).collect();
        let parts = agglomerate(&d, 4);
        assert_eq!(parts[0], vec![0, 0, 0, 0, 0]);
        assert_eq!(parts[1], vec![0, 0, 0, 0, 1]);
        assert_eq!(parts[2], vec![0, 0, 1, 1, 2]);
        assert_eq!(parts[3], vec![0, 0, 1, 2, 3]);
    }
}
