// SPDX-License-Identifier: Apache-2.0

mod common;

use common::{gradient_check, random_batch, random_model, separable_toy};
use logsieve_core::mlp::{Example, Mlp, MlpError, TrainConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn finite_difference_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for dims in [vec![5, 4, 4, 4, 3], vec![3, 3], vec![6, 8, 3], vec![5, 4, 4, 4, 3]] {
        let model = random_model(&dims, &mut rng);
        let batch = random_batch(dims[0], 3, 7, &mut rng);
        let (worst, n) = gradient_check(&model, &batch, 1e-5, 1e-8);
        assert_eq!(n, model.parameter_count());
        assert!(worst < 1e-4, "{dims:?}: worst relative error {worst}");
    }
}

#[test]
fn separable_toy_is_learned() {
    let data = separable_toy(40, 3);
    let cfg = TrainConfig { epochs: 200, learning_rate: 0.05, batch_size: 8, seed: 1, ..Default::default() };
    let out = Mlp::train(&[2, 16, 3], &data, &cfg).unwrap();
    let correct = data.iter().filter(|e| out.model.predict(&e.x).unwrap() == e.label).count();
    assert_eq!(correct, data.len());
    for w in out.loss_trace.windows(11) {
        assert!(w[10] <= w[0], "loss rose over a 10-epoch window: {} -> {}", w[0], w[10]);
    }
}

#[test]
fn seeded_training_is_bit_identical() {
    let data = separable_toy(10, 5);
    let cfg = TrainConfig { epochs: 5, seed: 9, ..Default::default() };
    let a = Mlp::train(&[2, 4, 3], &data, &cfg).unwrap();
    let b = Mlp::train(&[2, 4, 3], &data, &cfg).unwrap();
    assert_eq!(a.model.to_bytes(), b.model.to_bytes());
    assert_eq!(a.loss_trace, b.loss_trace);
}

#[test]
fn class_weighting_lifts_rare_class() {
    let mut data = separable_toy(60, 6);
    data.retain(|e| e.label != 2);
    data.extend(separable_toy(2, 7).into_iter().filter(|e| e.label == 2));
    let cfg = TrainConfig { epochs: 30, seed: 2, class_weighting: true, ..Default::default() };
    let out = Mlp::train(&[2, 8, 3], &data, &cfg).unwrap();
    assert_eq!(out.model.predict(&[0.0, 2.5]).unwrap(), 2);
}

#[test]
fn shape_and_label_errors() {
    let m = Mlp::zeros(&[4, 3]).unwrap();
    assert!(matches!(m.forward(&[0.0; 5]), Err(MlpError::Shape { expected: 4, got: 5 })));
    assert!(matches!(m.loss(&[]), Err(MlpError::EmptyBatch)));
    assert!(matches!(m.loss(&[Example::new(vec![0.0; 4], 3)]), Err(MlpError::Label { .. })));
    assert!(matches!(Mlp::train(&[4, 3], &[], &TrainConfig::default()), Err(MlpError::TrainingDataEmpty)));
}

#[test]
fn persistence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = Mlp::init(&[5, 4, 4, 4, 3], 1.0, &mut rng).unwrap();
    let bytes = m.to_bytes();
    let back = Mlp::from_bytes(&bytes).unwrap();
    for e in random_batch(5, 3, 100, &mut rng) {
        assert_eq!(m.forward(&e.x).unwrap(), back.forward(&e.x).unwrap());
    }
    assert!(matches!(Mlp::from_bytes(&bytes[..bytes.len() - 3]), Err(MlpError::Format(_))));
    let mut bad = bytes;
    bad[0] = b'L';
    assert!(matches!(Mlp::from_bytes(&bad), Err(MlpError::Format(_))));
}

proptest! {
    #[test]
    fn outputs_are_distributions(seed in any::<u64>(), x in prop::collection::vec(-50.0f64..50.0, 5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Mlp::init(&[5, 6, 3], 2.0, &mut rng).unwrap();
        let p = m.forward(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn loss_is_never_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Mlp::init(&[4, 5, 3], 1.0, &mut rng).unwrap();
        let batch = random_batch(4, 3, 9, &mut rng);
        prop_assert!(m.loss(&batch).unwrap() >= 0.0);
    }
}
