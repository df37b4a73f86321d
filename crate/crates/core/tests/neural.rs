use proptest::prelude::*;
use rand::Rng;
use sede::neural::{normalized_entropy, Activation, Dense, DenseNet, LabeledInput, TrainOptions};
use sede::seed;

fn random_net(sizes: &[usize], seed_value: u64, bias_scale: f64) -> DenseNet {
    let mut rng = seed::rng(seed_value);
    let mut net = DenseNet::random(sizes, &mut rng).unwrap();
    for layer in net.layers_mut() {
        for b in &mut layer.bias {
            *b = bias_scale * rng.gen_range(-1.0..1.0);
        }
    }
    net
}

#[test]
fn gradient_matches_central_differences() {
    for s in 0..10u64 {
        let mut net = random_net(&[4, 5, 3], s, 0.3);
        let mut rng = seed::rng(100 + s);
        let data: Vec<LabeledInput> = (0..6)
            .map(|_| LabeledInput {
                input: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                label: rng.gen_range(0..3),
            })
            .collect();
        let batch: Vec<&LabeledInput> = data.iter().collect();
        let (_, grad) = net.loss_and_gradient(&batch).unwrap();
        let h = 1e-6;
        for l in 0..net.layers().len() {
            for idx in 0..net.layers()[l].weights.len() {
                let orig = net.layers()[l].weights[idx];
                net.layers_mut()[l].weights[idx] = orig + h;
                let up = net.loss_and_gradient(&batch).unwrap().0;
                net.layers_mut()[l].weights[idx] = orig - h;
                let down = net.loss_and_gradient(&batch).unwrap().0;
                net.layers_mut()[l].weights[idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grad.weights[l][idx];
                let scale = numeric.abs().max(analytic.abs()).max(1e-3);
                assert!(
                    (numeric - analytic).abs() / scale < 1e-4,
                    "net {s} layer {l} weight {idx}: {numeric} vs {analytic}"
                );
            }
            for idx in 0..net.layers()[l].bias.len() {
                let orig = net.layers()[l].bias[idx];
                net.layers_mut()[l].bias[idx] = orig + h;
                let up = net.loss_and_gradient(&batch).unwrap().0;
                net.layers_mut()[l].bias[idx] = orig - h;
                let down = net.loss_and_gradient(&batch).unwrap().0;
                net.layers_mut()[l].bias[idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grad.bias[l][idx];
                let scale = numeric.abs().max(analytic.abs()).max(1e-3);
                assert!((numeric - analytic).abs() / scale < 1e-4);
            }
        }
    }
}

#[test]
fn separable_toy_reaches_full_accuracy() {
    let mut rng = seed::rng(3);
    let data: Vec<LabeledInput> = (0..200)
        .map(|_| {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let y: f64 = rng.gen_range(-1.0..1.0);
            let shift = if x + y > 0.0 { 0.2 } else { -0.2 };
            LabeledInput {
                input: vec![x + shift, y + shift],
                label: usize::from(x + y > 0.0),
            }
        })
        .collect();
    let net = DenseNet::random(&[2, 8, 2], &mut seed::rng(4)).unwrap();
    let out = net
        .train(&data, &TrainOptions { epochs: 200, learning_rate: 0.1, batch_size: 32, seed: 5 })
        .unwrap();
    assert!(out.net.accuracy(&data).unwrap() >= 0.99);
}

#[test]
fn convex_full_batch_loss_is_non_increasing() {
    let mut rng = seed::rng(11);
    let data: Vec<LabeledInput> = (0..60)
        .map(|i| LabeledInput {
            input: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 1.0],
            label: i % 3,
        })
        .collect();
    let net = DenseNet::new(vec![Dense::new(3, 3, vec![0.0; 9], vec![0.0; 3], Activation::Identity).unwrap()]).unwrap();
    let out = net
        .train(&data, &TrainOptions { epochs: 50, learning_rate: 0.1, batch_size: data.len(), seed: 0 })
        .unwrap();
    let initial = net.mean_loss(&data).unwrap();
    let mut prev = initial;
    for l in out.epoch_losses {
        assert!(l <= prev + 1e-12, "{l} > {prev}");
        prev = l;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lrp_conserves_relevance(net_seed in any::<u64>(), inputs in prop::collection::vec(0.0f64..2.0, 5)) {
        let net = random_net(&[5, 7, 6, 3], net_seed, 0.0);
        let pass = net.forward(&inputs).unwrap();
        let out = pass.logits()[pass.predicted_class()];
        let maps = net.lrp_all(&pass, 1e-6, "p");
        let total: f64 = maps[0].values.iter().sum();
        prop_assume!(out.abs() > 1e-3);
        prop_assert!(((total - out) / out).abs() < 1e-3, "total {} vs {}", total, out);
        for m in &maps {
            prop_assert!(m.values.iter().all(|v| v.is_finite()));
            prop_assert_eq!(m.cols, 1);
        }
    }

    #[test]
    fn entropy_is_bounded(raw in prop::collection::vec(0.0f64..1.0, 2..8)) {
        let sum: f64 = raw.iter().sum();
        prop_assume!(sum > 1e-9);
        let p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let h = normalized_entropy(&p);
        prop_assert!((0.0..=1.0).contains(&h));
        let uniform = p.iter().all(|v| (v - 1.0 / p.len() as f64).abs() < 1e-12);
        if !uniform {
            prop_assert!(h < 1.0);
        }
    }
}
