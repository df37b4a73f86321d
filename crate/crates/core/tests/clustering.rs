use proptest::prelude::*;
use rand::Rng;
use sede::clustering::{agglomerate, cluster_failures, distance_matrix, heatmap_distance, weighted_icd};
use sede::neural::Heatmap;
use sede::seed;

fn blob_maps(centres: &[Vec<f64>], per_blob: usize, spread: f64, layer: usize, seed_value: u64) -> (Vec<Heatmap>, Vec<usize>) {
    let mut rng = seed::rng(seed_value);
    let mut maps = Vec::new();
    let mut truth = Vec::new();
    for (b, c) in centres.iter().enumerate() {
        for _ in 0..per_blob {
            let v = c.iter().map(|x| x + spread * rng.gen_range(-1.0..1.0)).collect();
            maps.push(Heatmap::column(layer, v, "blob"));
            truth.push(b);
        }
    }
    (maps, truth)
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

#[test]
fn two_blobs_are_recovered() {
    let centres = vec![vec![0.0; 8], vec![5.0; 8]];
    let (maps, truth) = blob_maps(&centres, 15, 0.5, 0, 1);
    let ids: Vec<usize> = (0..maps.len()).collect();
    let per_input: Vec<Vec<Heatmap>> = maps.into_iter().map(|h| vec![h]).collect();
    let r = cluster_failures(&ids, &per_input, None).unwrap();
    assert_eq!(r.k, 2);
    let mut labels = vec![0; ids.len()];
    for c in &r.clusters {
        for m in &c.members {
            labels[*m] = c.id;
        }
    }
    assert!(same_partition(&labels, &truth));
}

#[test]
fn informative_layer_beats_constant_layer() {
    let centres = vec![vec![0.0; 6], vec![4.0, 0.0, 0.0, 4.0, 0.0, 0.0], vec![0.0, 0.0, 8.0, 0.0, 0.0, 8.0]];
    let (maps, truth) = blob_maps(&centres, 10, 0.3, 1, 2);
    let ids: Vec<usize> = (0..maps.len()).collect();
    let per_input: Vec<Vec<Heatmap>> = maps
        .into_iter()
        .map(|h| vec![Heatmap::column(0, vec![1.0, 2.0, 3.0], "const"), h])
        .collect();
    let r = cluster_failures(&ids, &per_input, None).unwrap();
    assert_eq!(r.layer, 1);
    assert_eq!(r.k, 3);
    let mut labels = vec![0; ids.len()];
    for c in &r.clusters {
        for m in &c.members {
            labels[*m] = c.id;
        }
    }
    assert!(same_partition(&labels, &truth));
}

#[test]
fn distance_matches_summation_oracle() {
    let mut rng = seed::rng(3);
    for _ in 0..50 {
        let a: Vec<f64> = (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut sq = 0.0;
        for i in 0..8 {
            let d = a[i] - b[i];
            sq += d * d;
        }
        let got = heatmap_distance(&Heatmap::column(0, a, "a"), &Heatmap::column(0, b, "b")).unwrap();
        assert!((got - sq.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn medoid_radius_and_membership_rescan() {
    let centres = vec![vec![0.0; 4], vec![3.0; 4], vec![-3.0, 3.0, -3.0, 3.0]];
    for s in 0..5 {
        let (maps, _) = blob_maps(&centres, 12, 1.0, 0, 10 + s);
        let ids: Vec<usize> = (0..maps.len()).collect();
        let per_input: Vec<Vec<Heatmap>> = maps.into_iter().map(|h| vec![h]).collect();
        let r = cluster_failures(&ids, &per_input, None).unwrap();
        let total: usize = r.clusters.iter().map(|c| c.len()).sum();
        assert_eq!(total, ids.len());
        for c in &r.clusters {
            if c.degenerate {
                continue;
            }
            let mean = |i: usize| {
                c.heatmaps.iter().map(|h| heatmap_distance(&c.heatmaps[i], h).unwrap()).sum::<f64>() / c.len() as f64
            };
            let best = (0..c.len()).map(mean).fold(f64::INFINITY, f64::min);
            assert!(mean(c.medoid) <= best);
            let radius = c.heatmaps.iter().map(|h| heatmap_distance(h, c.medoid_heatmap()).unwrap()).fold(0.0, f64::max);
            assert_eq!(radius, c.radius);
            for h in &c.heatmaps {
                assert!(c.rcc_distance(h).unwrap() <= 1.0);
            }
        }
    }
}

#[test]
fn weighted_icd_non_increasing_on_blobs() {
    for s in 0..10 {
        let centres = vec![vec![0.0; 5], vec![6.0; 5], vec![0.0, 6.0, 0.0, 6.0, 0.0], vec![-6.0; 5]];
        let (maps, _) = blob_maps(&centres, 8, 1.5, 0, 100 + s);
        let d = distance_matrix(&maps).unwrap();
        let parts = agglomerate(&d, 10);
        let curve: Vec<f64> = parts.iter().map(|p| weighted_icd(&d, p)).collect();
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{curve:?}");
        }
    }
}

proptest! {
    #[test]
    fn distance_is_a_metric(
        a in prop::collection::vec(-5.0f64..5.0, 6),
        b in prop::collection::vec(-5.0f64..5.0, 6),
        c in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let (a, b, c) = (Heatmap::column(2, a, "a"), Heatmap::column(2, b, "b"), Heatmap::column(2, c, "c"));
        let ab = heatmap_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, heatmap_distance(&b, &a).unwrap());
        prop_assert!(ab <= heatmap_distance(&a, &c).unwrap() + heatmap_distance(&c, &b).unwrap() + 1e-12);
    }
}
