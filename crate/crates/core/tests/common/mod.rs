// SPDX-License-Identifier: Apache-2.0

//! Reference implementations and fixtures shared by the integration tests.
//! Everything here is written for clarity, not speed, and shares no code
//! with the library paths it checks.

#![allow(dead_code)]

use std::collections::HashMap;

use logsieve_core::lda::{build_corpus, LdaConfig, LdaModel};
use logsieve_core::mlp::{Example, Mlp};
use logsieve_core::vocab::Vocabulary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BOS: &str = "<s>";
const EOS: &str = "</s>";

/// Interpolated n-gram model over plain string-keyed maps.
pub struct NaiveLm {
    order: usize,
    weights: Vec<f64>,
    ngrams: HashMap<Vec<String>, u64>,
    contexts: HashMap<Vec<String>, u64>,
    unigrams: HashMap<String, u64>,
    n: u64,
    v: u64,
}

impl NaiveLm {
    pub fn train(corpus: &[Vec<String>], order: usize, weights: &[f64]) -> Self {
        let mut lm = NaiveLm {
            order,
            weights: weights.to_vec(),
            ngrams: HashMap::new(),
            contexts: HashMap::new(),
            unigrams: HashMap::new(),
            n: 0,
            v: 0,
        };
        let mut vocab: std::collections::HashSet<String> =
            [BOS, EOS, "<unk>"].iter().map(|s| s.to_string()).collect();
        for seq in corpus.iter().filter(|s| !s.is_empty()) {
            let padded = pad(seq, order);
            for i in (order - 1)..padded.len() {
                let w = &padded[i];
                vocab.insert(w.clone());
                *lm.unigrams.entry(w.clone()).or_default() += 1;
                lm.n += 1;
                for len in 1..order {
                    let ctx = padded[i - len..i].to_vec();
                    let mut gram = ctx.clone();
                    gram.push(w.clone());
                    *lm.ngrams.entry(gram).or_default() += 1;
                    *lm.contexts.entry(ctx).or_default() += 1;
                }
            }
        }
        lm.v = vocab.len() as u64;
        lm
    }

    /// P(w | history), `history` already padded with `<s>` and oldest first.
    pub fn prob(&self, history: &[String], w: &str) -> f64 {
        let w = if self.unigrams.contains_key(w) || w == BOS { w.to_string() } else { "<unk>".to_string() };
        let mut total = 0.0;
        let mut carried = 0.0;
        for (j, &lambda) in self.weights.iter().enumerate() {
            let ctx_len = self.order - 1 - j;
            let lambda = lambda + carried;
            carried = 0.0;
            if ctx_len == 0 {
                let c = *self.unigrams.get(&w).unwrap_or(&0) as f64;
                total += lambda * (c + 1.0) / ((self.n + self.v) as f64);
                continue;
            }
            let ctx = history[history.len() - ctx_len..].to_vec();
            match self.contexts.get(&ctx) {
                None => carried = lambda,
                Some(&ctx_total) => {
                    let mut gram = ctx;
                    gram.push(w.clone());
                    let c = *self.ngrams.get(&gram).unwrap_or(&0) as f64;
                    total += lambda * c / ctx_total as f64;
                }
            }
        }
        total
    }

    pub fn log2_ppx(&self, seq: &[String]) -> f64 {
        let padded = pad(seq, self.order);
        let mut sum = 0.0;
        for i in (self.order - 1)..padded.len() {
            sum += self.prob(&padded[..i], &padded[i]).log2();
        }
        (-sum / (seq.len() + 1) as f64).max(0.0)
    }
}

fn pad(seq: &[String], order: usize) -> Vec<String> {
    let mut v: Vec<String> = std::iter::repeat_n(BOS.to_string(), order - 1).collect();
    v.extend(seq.iter().cloned());
    v.push(EOS.to_string());
    v
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

/// Two topics over disjoint vocabularies `a0..a{n}` and `b0..b{n}`. Each
/// document has a dominant topic; every token comes from it with
/// probability `purity`, else from the other topic.
pub fn two_topic_corpus(docs: usize, doc_len: usize, vocab_per_topic: usize, purity: f64, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|_| {
            let dominant = rng.random_bool(0.5);
            (0..doc_len)
                .map(|_| {
                    let topic_a = dominant == rng.random_bool(purity);
                    let w = rng.random_range(0..vocab_per_topic);
                    format!("{}{w}", if topic_a { 'a' } else { 'b' })
                })
                .collect()
        })
        .collect()
}

/// Share of each vocabulary's topic-word mass held by its majority topic,
/// as `(purity_a, purity_b, majority_a, majority_b)`.
pub fn topic_purity(model: &LdaModel, vocab: &Vocabulary) -> (f64, f64, usize, usize) {
    let k = model.topics();
    let mut mass = [vec![0.0; k], vec![0.0; k]];
    for (id, tok) in vocab.iter() {
        let side = usize::from(tok.starts_with('b'));
        for (t, m) in mass[side].iter_mut().enumerate() {
            *m += model.phi_row(t)[id as usize];
        }
    }
    let best = |m: &[f64]| {
        let (arg, max) = m
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        (max / m.iter().sum::<f64>(), arg)
    };
    let (pa, ka) = best(&mass[0]);
    let (pb, kb) = best(&mass[1]);
    (pa, pb, ka, kb)
}

pub fn train_two_topic(docs: &[Vec<String>], sweeps: usize, seed: u64) -> (LdaModel, Vocabulary) {
    let (vocab, ids) = build_corpus(docs);
    let cfg = LdaConfig {
        topics: 2,
        sweeps,
        seed,
        ..Default::default()
    };
    let model = LdaModel::train(&ids, vocab.clone(), &cfg).expect("train");
    (model, vocab)
}

/// Worst relative error between analytic gradients and central finite
/// differences of the mean loss, over every parameter. The denominator is
/// floored at `floor` so coordinates whose true gradient is zero compare
/// on absolute error.
pub fn gradient_check(model: &Mlp, batch: &[Example], eps: f64, floor: f64) -> (f64, usize) {
    let analytic = model.backward(batch).expect("backward");
    let flat: Vec<f64> = analytic
        .weights
        .iter()
        .zip(&analytic.bias)
        .flat_map(|(w, b)| w.iter().chain(b).copied())
        .collect();
    assert_eq!(flat.len(), model.parameter_count());
    let mut worst = 0.0f64;
    for (i, &g) in flat.iter().enumerate() {
        let mut plus = model.clone();
        *plus.parameters_mut().nth(i).unwrap() += eps;
        let mut minus = model.clone();
        *minus.parameters_mut().nth(i).unwrap() -= eps;
        let numeric = (plus.loss(batch).unwrap() - minus.loss(batch).unwrap()) / (2.0 * eps);
        let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    (worst, flat.len())
}

/// Model with every parameter, biases included, drawn uniformly. Zero biases
/// put pre-activations exactly on the ReLU kink whenever a whole layer is
/// inactive, where finite differences and the subgradient legitimately differ.
pub fn random_model(dims: &[usize], rng: &mut impl Rng) -> Mlp {
    let mut m = Mlp::zeros(dims).expect("dims");
    for p in m.parameters_mut() {
        *p = rng.random_range(-1.0..1.0);
    }
    m
}

pub fn random_batch(inputs: usize, classes: usize, n: usize, rng: &mut impl Rng) -> Vec<Example> {
    (0..n)
        .map(|_| {
            let x = (0..inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
            Example::new(x, rng.random_range(0..classes))
        })
        .collect()
}

/// Three well-separated 2-D clusters.
pub fn separable_toy(per_class: usize, seed: u64) -> Vec<Example> {
    let centres = [(-2.0, -2.0), (2.0, -2.0), (0.0, 2.5)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (c, &(cx, cy)) in centres.iter().enumerate() {
        for _ in 0..per_class {
            let x = vec![cx + rng.random_range(-0.8..0.8), cy + rng.random_range(-0.8..0.8)];
            out.push(Example::new(x, c));
        }
    }
    out
}
