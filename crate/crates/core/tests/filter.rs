// SPDX-License-Identifier: Apache-2.0

use logsieve_core::corpus::{generate, SyntheticSpec};
use logsieve_core::filter::{calibrate_threshold, filter_records, filter_stream, histogram, FilterConfig, FilterError};
use logsieve_core::records::RecordError;
use logsieve_core::{NGramModel, RawRecord, Tokenizer};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model_and_records(n: usize, seed: u64) -> (NGramModel, Vec<RawRecord>) {
    let train = generate(&SyntheticSpec { seed, ..Default::default() }, 3000).unwrap();
    let tok = Tokenizer::default();
    let seqs: Vec<Vec<String>> = train.iter().map(|r| tok.tokenize_text(&r.text)).collect();
    let lm = NGramModel::train(&seqs, 3).unwrap();
    let recs = random_records(n, seed + 1);
    (lm, recs)
}

/// Synthetic log lines mixed with random junk and blank-after-normalization lines.
fn random_records(n: usize, seed: u64) -> Vec<RawRecord> {
    let synth = generate(&SyntheticSpec { seed, ..Default::default() }, n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synth
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let text = match rng.random_range(0..20) {
                0 => "--- ::: ---".to_string(),
                1 => (0..rng.random_range(1..15))
                    .map(|_| format!("z{}", rng.random_range(0..5000)))
                    .collect::<Vec<_>>()
                    .join(" "),
                _ => r.text,
            };
            RawRecord {
                line_no: i as u64 + 1,
                text,
                preset_label: r.preset_label,
            }
        })
        .collect()
}

fn kept_lines(lm: &NGramModel, recs: &[RawRecord], threshold: f64, workers: usize) -> (Vec<u64>, u64, u64) {
    let cfg = FilterConfig { threshold, workers, ..Default::default() };
    let (kept, report) = filter_records(recs.to_vec(), lm, &Tokenizer::default(), &cfg).unwrap();
    (kept.iter().map(|k| k.record.line_no).collect(), report.kept, report.filtered)
}

#[test]
fn documented_threshold_examples() {
    let cfg = FilterConfig { threshold: 11.0, ..Default::default() };
    assert!(cfg.keeps(11.5));
    assert!(!cfg.keeps(8.5));
    assert!(cfg.keeps(11.0));
}

#[test]
fn negative_infinity_keeps_everything_scorable() {
    let (lm, recs) = model_and_records(2000, 3);
    let cfg = FilterConfig { threshold: f64::NEG_INFINITY, ..Default::default() };
    let (_, report) = filter_records(recs, &lm, &Tokenizer::default(), &cfg).unwrap();
    assert_eq!(report.kept + report.empty_records, report.total_in);
    assert_eq!(report.filtered, report.empty_records);
}

#[test]
fn worker_count_does_not_change_output() {
    let (lm, recs) = model_and_records(10_000, 21);
    let serial = filter_records(recs.clone(), &lm, &Tokenizer::default(), &FilterConfig { threshold: 2.0, workers: 1, ..Default::default() }).unwrap();
    let parallel = filter_records(recs, &lm, &Tokenizer::default(), &FilterConfig { threshold: 2.0, workers: 8, ..Default::default() }).unwrap();
    assert_eq!(serial.0, parallel.0);
    let (a, mut b) = (serial.1.without_timings(), parallel.1.without_timings());
    b.workers = a.workers;
    assert_eq!(a, b);
}

#[test]
fn malformed_and_io_errors() {
    let (lm, _) = model_and_records(10, 1);
    let input = vec![
        Ok(RawRecord::new(1, "disk full on node")),
        Err(RecordError::Parse { line_no: 2, message: "bad".into() }),
        Ok(RawRecord::new(3, "retry ok")),
        Err(RecordError::Io { line_no: 4, source: std::io::Error::other("gone") }),
        Ok(RawRecord::new(5, "never seen")),
    ];
    let mut seen = Vec::new();
    let err = filter_stream(input, &lm, &Tokenizer::default(), &FilterConfig::default(), |v| {
        seen.push(v.record.line_no);
        Ok(())
    })
    .unwrap_err();
    assert!(matches!(err, FilterError::Input { .. }));
    let partial = err.partial_report().unwrap();
    assert_eq!(partial.total_in, 2);
    assert_eq!(partial.malformed, 1);
    assert_eq!(partial.malformed_lines, [2]);
    assert_eq!(seen, [1, 3]);
}

#[test]
fn sink_failure_stops_the_run() {
    let (lm, recs) = model_and_records(100, 2);
    let mut n = 0;
    let err = filter_stream(recs.into_iter().map(Ok), &lm, &Tokenizer::default(), &FilterConfig::default(), |_| {
        n += 1;
        if n == 10 {
            Err(std::io::Error::new(std::io::ErrorKind::BrokenPipe, "closed"))
        } else {
            Ok(())
        }
    })
    .unwrap_err();
    assert!(matches!(err, FilterError::Output { .. }));
    assert_eq!(err.partial_report().unwrap().total_in, 10);
}

#[test]
fn calibration_examples() {
    let scores: Vec<f64> = (1..=100).map(f64::from).collect();
    let t = calibrate_threshold(&scores, 0.10).unwrap();
    let kept: Vec<f64> = scores.iter().copied().filter(|&s| s >= t).collect();
    assert_eq!(kept, (91..=100).map(f64::from).collect::<Vec<_>>());
    assert_eq!(calibrate_threshold(&scores, 1.0).unwrap(), 1.0);
    assert!(calibrate_threshold(&scores, 0.0).is_err());
    assert!(calibrate_threshold(&[], 0.5).is_err());
}

#[test]
fn histogram_examples() {
    let h = histogram([(None, 8.1), (None, 8.2), (None, 11.5)], 1.0).unwrap();
    let bins: Vec<(i64, u64)> = h["unlabeled"].counts.iter().map(|(&k, &v)| (k, v)).collect();
    assert_eq!(bins, [(8, 2), (11, 1)]);
    assert!(histogram(std::iter::empty(), 1.0).unwrap().is_empty());

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = histogram((0..10_000).map(|_| (None, rng.random_range(0.0..20.0))), 0.25).unwrap();
    assert_eq!(h["unlabeled"].total(), 10_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn threshold_monotone_and_partitioning(seed in 0u64..1000, t1 in 0.0f64..12.0, dt in 0.0f64..6.0) {
        let (lm, recs) = model_and_records(400, seed);
        let (low, kept_low, filtered_low) = kept_lines(&lm, &recs, t1, 1);
        let (high, _, _) = kept_lines(&lm, &recs, t1 + dt, 1);
        prop_assert!(high.iter().all(|l| low.binary_search(l).is_ok()));
        prop_assert_eq!(kept_low + filtered_low, recs.len() as u64);
        prop_assert_eq!(low.len() as u64, kept_low);
    }

    #[test]
    fn workers_agree(seed in 0u64..1000, t in 0.0f64..10.0, workers in 2usize..9) {
        let (lm, recs) = model_and_records(3000, seed);
        prop_assert_eq!(kept_lines(&lm, &recs, t, 1), kept_lines(&lm, &recs, t, workers));
    }
}
