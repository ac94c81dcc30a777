// SPDX-License-Identifier: Apache-2.0

mod common;

use common::{topic_purity, train_two_topic, two_topic_corpus};
use logsieve_core::lda::{build_corpus, GibbsSampler, LdaConfig, LdaError, LdaModel};
use proptest::prelude::*;

#[test]
fn recovers_two_disjoint_topics() {
    let docs = two_topic_corpus(400, 40, 30, 1.0, 1);
    let (model, vocab) = train_two_topic(&docs, 100, 7);
    let (pa, pb, ka, kb) = topic_purity(&model, &vocab);
    assert_ne!(ka, kb);
    assert!(pa >= 0.95 && pb >= 0.95, "{pa} {pb}");

    let a_doc: Vec<String> = (0..30).map(|i| format!("a{i}")).collect();
    let theta = model.infer(&a_doc, 50, 3);
    assert_eq!(theta.argmax(), ka);
    assert!(theta.theta[ka] >= 0.8, "{:?}", theta.theta);
}

#[test]
fn mostly_pure_documents_still_separate() {
    let docs = two_topic_corpus(600, 40, 30, 0.95, 2);
    let (model, vocab) = train_two_topic(&docs, 100, 3);
    let (pa, pb, ka, kb) = topic_purity(&model, &vocab);
    assert_ne!(ka, kb);
    assert!(pa >= 0.95 && pb >= 0.95, "{pa} {pb}");
}

#[test]
fn training_is_deterministic() {
    let docs = two_topic_corpus(100, 20, 10, 0.8, 2);
    let (a, _) = train_two_topic(&docs, 20, 5);
    let (b, _) = train_two_topic(&docs, 20, 5);
    assert_eq!(a.to_bytes(), b.to_bytes());
}

#[test]
fn defaults_follow_one_over_k() {
    let docs = two_topic_corpus(20, 10, 5, 0.8, 3);
    let (vocab, ids) = build_corpus(&docs);
    let cfg = LdaConfig { topics: 4, sweeps: 2, ..Default::default() };
    let m = LdaModel::train(&ids, vocab, &cfg).unwrap();
    assert!(m.alpha().iter().all(|&a| a == 0.25));
    assert!(m.beta().iter().all(|&b| b == 0.25));
    assert_eq!(LdaConfig::default().topics, 100);
}

#[test]
fn round_trip_inference_is_identical() {
    let docs = two_topic_corpus(200, 20, 15, 0.85, 4);
    let (model, _) = train_two_topic(&docs, 30, 1);
    let bytes = model.to_bytes();
    let back = LdaModel::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    for (i, d) in two_topic_corpus(100, 15, 20, 0.7, 99).iter().enumerate() {
        let a = model.infer(d, 20, i as u64);
        let b = back.infer(d, 20, i as u64);
        assert_eq!(a, b);
    }
}

#[test]
fn corrupted_files() {
    let docs = two_topic_corpus(20, 10, 5, 0.8, 3);
    let bytes = train_two_topic(&docs, 4, 1).0.to_bytes();
    for cut in [0, 4, 8, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(LdaModel::from_bytes(&bytes[..cut]), Err(LdaError::Format(_))));
    }
    let mut v = bytes.clone();
    v[4] = 2;
    let err = LdaModel::from_bytes(&v).unwrap_err();
    assert!(err.to_string().contains("version 2"), "{err}");
    let mut m = bytes;
    m[..4].copy_from_slice(b"NGLM");
    assert!(matches!(LdaModel::from_bytes(&m), Err(LdaError::Format(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn count_invariants_every_sweep(
        docs in prop::collection::vec(prop::collection::vec(0u32..25, 0..30), 1..40),
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut s = GibbsSampler::new(&docs, 25, k, 1.0 / k as f64, 1.0 / k as f64, seed);
        for _ in 0..5 {
            s.sweep();
            prop_assert_eq!(s.check_invariants(), Ok(()));
        }
        let phi = s.phi();
        for row in phi.chunks(25) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for m in 0..docs.len() {
            prop_assert!((s.theta(m).theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn inferred_theta_on_simplex(doc in prop::collection::vec("[ab][0-9]", 0..40), seed in any::<u64>()) {
        let docs = two_topic_corpus(60, 15, 10, 0.9, 8);
        let (model, _) = train_two_topic(&docs, 10, 1);
        let theta = model.infer(&doc, 10, seed);
        prop_assert!((theta.theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(theta.theta.iter().all(|&t| t > 0.0));
    }
}
