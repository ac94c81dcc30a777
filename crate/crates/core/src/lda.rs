// SPDX-License-Identifier: Apache-2.0

//! Latent Dirichlet Allocation fitted by collapsed Gibbs sampling.
//!
//! Each sweep resamples every token's topic from
//!
//! ```text
//! p(z = k | rest) ∝ (n_mk + alpha_k) * (n_kw + beta_w) / (n_k + sum(beta))
//! ```
//!
//! with the token's own assignment removed from the counts. The first half of
//! the sweeps is burn-in; afterwards the topic-word estimate
//! `(n_kw + beta_w) / (n_k + sum(beta))` is averaged over every fifth sweep.
//! New documents are folded in against the fixed `phi` the same way.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{ModelFormatError, Reader, Writer};
use crate::vocab::Vocabulary;

const MAGIC: &[u8; 4] = b"LDAM";
const VERSION: u32 = 1;
/// Post-burn-in sweeps between averaged samples.
pub const SAMPLE_LAG: usize = 5;

pub const DEFAULT_TOPICS: usize = 100;
pub const DEFAULT_TRAIN_SWEEPS: usize = 200;
pub const DEFAULT_INFER_SWEEPS: usize = 50;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("no tokens to train the topic model on")]
    TrainingDataEmpty,
    #[error("invalid topic model config: {0}")]
    Config(String),
    #[error(transparent)]
    Format(#[from] ModelFormatError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaConfig {
    pub topics: usize,
    /// Symmetric document-topic prior; `None` means `1 / topics`.
    pub alpha: Option<f64>,
    /// Symmetric topic-word prior; `None` means `1 / topics`.
    pub beta: Option<f64>,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            topics: DEFAULT_TOPICS,
            alpha: None,
            beta: None,
            sweeps: DEFAULT_TRAIN_SWEEPS,
            seed: 0,
        }
    }
}

impl LdaConfig {
    fn priors(&self) -> Result<(f64, f64), LdaError> {
        if self.topics == 0 || self.topics > u16::MAX as usize {
            return Err(LdaError::Config(format!("topic count {}", self.topics)));
        }
        if self.sweeps == 0 {
            return Err(LdaError::Config("sweeps must be at least 1".into()));
        }
        let default = 1.0 / self.topics as f64;
        let alpha = self.alpha.unwrap_or(default);
        let beta = self.beta.unwrap_or(default);
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(LdaError::Config(format!(
                "priors must be positive (alpha {alpha}, beta {beta})"
            )));
        }
        Ok((alpha, beta))
    }
}

/// Sweep indices (1-based) after which an estimate is accumulated.
fn is_sample_sweep(sweep: usize, total: usize) -> bool {
    let burn_in = total / 2;
    sweep > burn_in && ((sweep - burn_in).is_multiple_of(SAMPLE_LAG) || (sweep == total && total - burn_in < SAMPLE_LAG))
}

/// Bag-of-words documents over a plain vocabulary built from token streams.
pub fn build_corpus<I, S, T>(docs: I) -> (Vocabulary, Vec<Vec<u32>>)
where
    I: IntoIterator<Item = S>,
    S: AsRef<[T]>,
    T: AsRef<str>,
{
    let mut vocab = Vocabulary::plain();
    let docs = docs
        .into_iter()
        .map(|d| d.as_ref().iter().map(|t| vocab.intern(t.as_ref())).collect())
        .collect();
    (vocab, docs)
}

/// Collapsed Gibbs sampler state: topic assignments plus the count tables
/// they induce.
#[derive(Debug, Clone)]
pub struct GibbsSampler<'a> {
    docs: &'a [Vec<u32>],
    topics: usize,
    vocab_size: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    beta_sum: f64,
    z: Vec<Vec<u16>>,
    /// Document-major `n_mk`.
    doc_topic: Vec<u32>,
    /// Word-major `n_kw`, i.e. `word_topic[w * K + k]`.
    word_topic: Vec<u32>,
    topic_total: Vec<u32>,
    rng: ChaCha8Rng,
    sweeps_done: usize,
    weights: Vec<f64>,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(
        docs: &'a [Vec<u32>],
        vocab_size: usize,
        topics: usize,
        alpha: f64,
        beta: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut doc_topic = vec![0u32; docs.len() * topics];
        let mut word_topic = vec![0u32; vocab_size * topics];
        let mut topic_total = vec![0u32; topics];
        let z = docs
            .iter()
            .enumerate()
            .map(|(m, doc)| {
                doc.iter()
                    .map(|&w| {
                        let k = rng.random_range(0..topics);
                        doc_topic[m * topics + k] += 1;
                        word_topic[w as usize * topics + k] += 1;
                        topic_total[k] += 1;
                        k as u16
                    })
                    .collect()
            })
            .collect();
        GibbsSampler {
            docs,
            topics,
            vocab_size,
            alpha: vec![alpha; topics],
            beta: vec![beta; vocab_size],
            beta_sum: beta * vocab_size as f64,
            z,
            doc_topic,
            word_topic,
            topic_total,
            rng,
            sweeps_done: 0,
            weights: vec![0.0; topics],
        }
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    /// Resamples every topic assignment once, in document order.
    pub fn sweep(&mut self) {
        let kk = self.topics;
        let mut inv_denom: Vec<f64> = self
            .topic_total
            .iter()
            .map(|&n| 1.0 / (f64::from(n) + self.beta_sum))
            .collect();
        for (m, doc) in self.docs.iter().enumerate() {
            let dt = m * kk;
            for (n, &w) in doc.iter().enumerate() {
                let w = w as usize;
                let wt = w * kk;
                let old = self.z[m][n] as usize;
                self.doc_topic[dt + old] -= 1;
                self.word_topic[wt + old] -= 1;
                self.topic_total[old] -= 1;
                inv_denom[old] = 1.0 / (f64::from(self.topic_total[old]) + self.beta_sum);

                let beta_w = self.beta[w];
                let mut total = 0.0;
                for k in 0..kk {
                    let p = (f64::from(self.doc_topic[dt + k]) + self.alpha[k])
                        * (f64::from(self.word_topic[wt + k]) + beta_w)
                        * inv_denom[k];
                    total += p;
                    self.weights[k] = total;
                }
                let new = sample_cumulative(&self.weights, total, &mut self.rng);

                self.z[m][n] = new as u16;
                self.doc_topic[dt + new] += 1;
                self.word_topic[wt + new] += 1;
                self.topic_total[new] += 1;
                inv_denom[new] = 1.0 / (f64::from(self.topic_total[new]) + self.beta_sum);
            }
        }
        self.sweeps_done += 1;
    }

    /// Unnormalized conditional weights for token `n` of document `m`, with
    /// that token's own assignment excluded.
    pub fn conditional_weights(&self, m: usize, n: usize) -> Vec<f64> {
        let kk = self.topics;
        let w = self.docs[m][n] as usize;
        let own = self.z[m][n] as usize;
        (0..kk)
            .map(|k| {
                let minus = u32::from(k == own);
                (f64::from(self.doc_topic[m * kk + k] - minus) + self.alpha[k])
                    * (f64::from(self.word_topic[w * kk + k] - minus) + self.beta[w])
                    / (f64::from(self.topic_total[k] - minus) + self.beta_sum)
            })
            .collect()
    }

    /// Recounts everything from the assignments and compares against the
    /// incrementally maintained tables.
    pub fn check_invariants(&self) -> Result<(), String> {
        let kk = self.topics;
        let mut doc_topic = vec![0u32; self.doc_topic.len()];
        let mut word_topic = vec![0u32; self.word_topic.len()];
        let mut topic_total = vec![0u32; kk];
        for (m, (doc, z)) in self.docs.iter().zip(&self.z).enumerate() {
            if doc.len() != z.len() {
                return Err(format!("document {m}: {} tokens, {} assignments", doc.len(), z.len()));
            }
            for (&w, &k) in doc.iter().zip(z) {
                let k = k as usize;
                if k >= kk {
                    return Err(format!("document {m}: topic {k} out of range"));
                }
                doc_topic[m * kk + k] += 1;
                word_topic[w as usize * kk + k] += 1;
                topic_total[k] += 1;
            }
            let row: u32 = self.doc_topic[m * kk..(m + 1) * kk].iter().sum();
            if row as usize != doc.len() {
                return Err(format!("document {m}: topic counts sum to {row}, length {}", doc.len()));
            }
        }
        for k in 0..kk {
            let col: u32 = (0..self.vocab_size).map(|w| self.word_topic[w * kk + k]).sum();
            if col != self.topic_total[k] {
                return Err(format!("topic {k}: word counts sum to {col}, total {}", self.topic_total[k]));
            }
        }
        if doc_topic != self.doc_topic || word_topic != self.word_topic || topic_total != self.topic_total {
            return Err("count tables disagree with assignments".into());
        }
        Ok(())
    }

    /// Current point estimate of `phi`, topic-major.
    pub fn phi(&self) -> Vec<f64> {
        let kk = self.topics;
        let mut phi = vec![0.0; kk * self.vocab_size];
        for k in 0..kk {
            let denom = f64::from(self.topic_total[k]) + self.beta_sum;
            for w in 0..self.vocab_size {
                phi[k * self.vocab_size + w] =
                    (f64::from(self.word_topic[w * kk + k]) + self.beta[w]) / denom;
            }
        }
        phi
    }

    /// Current point estimate of document `m`'s topic mix.
    pub fn theta(&self, m: usize) -> TopicVector {
        let kk = self.topics;
        let alpha_sum: f64 = self.alpha.iter().sum();
        let len = self.docs[m].len() as f64;
        TopicVector {
            theta: (0..kk)
                .map(|k| (f64::from(self.doc_topic[m * kk + k]) + self.alpha[k]) / (len + alpha_sum))
                .collect(),
        }
    }
}

fn sample_cumulative(cumulative: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let u = rng.random::<f64>() * total;
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

/// A document's topic proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicVector {
    pub theta: Vec<f64>,
}

impl TopicVector {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.theta.iter().enumerate() {
            if v > self.theta[best] {
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    topics: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Topic-major `K x V`.
    phi: Vec<f64>,
    vocab: Vocabulary,
    /// Word-major copy of `phi` for fold-in.
    phi_by_word: Vec<f64>,
}

impl LdaModel {
    pub fn train(docs: &[Vec<u32>], vocab: Vocabulary, cfg: &LdaConfig) -> Result<Self, LdaError> {
        Self::train_observed(docs, vocab, cfg, |_| {})
    }

    /// Like [`train`](Self::train), calling `observe` after every sweep.
    pub fn train_observed<F>(
        docs: &[Vec<u32>],
        vocab: Vocabulary,
        cfg: &LdaConfig,
        mut observe: F,
    ) -> Result<Self, LdaError>
    where
        F: FnMut(&GibbsSampler<'_>),
    {
        let (alpha, beta) = cfg.priors()?;
        if docs.iter().all(Vec::is_empty) {
            return Err(LdaError::TrainingDataEmpty);
        }
        let v = vocab.len();
        if let Some(&w) = docs.iter().flatten().find(|&&w| w as usize >= v) {
            return Err(LdaError::Config(format!("token id {w} outside vocabulary of {v}")));
        }
        let mut sampler = GibbsSampler::new(docs, v, cfg.topics, alpha, beta, cfg.seed);
        let mut phi_sum = vec![0.0; cfg.topics * v];
        let mut samples = 0usize;
        for s in 1..=cfg.sweeps {
            sampler.sweep();
            observe(&sampler);
            if is_sample_sweep(s, cfg.sweeps) {
                for (acc, p) in phi_sum.iter_mut().zip(sampler.phi()) {
                    *acc += p;
                }
                samples += 1;
            }
        }
        let phi: Vec<f64> = phi_sum.into_iter().map(|p| p / samples as f64).collect();
        Ok(Self::assemble(cfg.topics, sampler.alpha, sampler.beta, phi, vocab))
    }

    fn assemble(topics: usize, alpha: Vec<f64>, beta: Vec<f64>, phi: Vec<f64>, vocab: Vocabulary) -> Self {
        let v = vocab.len();
        let mut phi_by_word = vec![0.0; phi.len()];
        for k in 0..topics {
            for w in 0..v {
                phi_by_word[w * topics + k] = phi[k * v + w];
            }
        }
        LdaModel {
            topics,
            alpha,
            beta,
            phi,
            vocab,
            phi_by_word,
        }
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Row `k` of the topic-word matrix.
    pub fn phi_row(&self, k: usize) -> &[f64] {
        let v = self.vocab.len();
        &self.phi[k * v..(k + 1) * v]
    }

    pub fn prior_theta(&self) -> TopicVector {
        let sum: f64 = self.alpha.iter().sum();
        TopicVector {
            theta: self.alpha.iter().map(|a| a / sum).collect(),
        }
    }

    /// Folds a document in with `phi` held fixed. Tokens outside the model
    /// vocabulary are skipped; a document with nothing left gets the prior.
    pub fn infer<S: AsRef<str>>(&self, tokens: &[S], sweeps: usize, seed: u64) -> TopicVector {
        let ids: Vec<u32> = tokens.iter().filter_map(|t| self.vocab.id(t.as_ref())).collect();
        self.infer_ids(&ids, sweeps, seed)
    }

    pub fn infer_ids(&self, doc: &[u32], sweeps: usize, seed: u64) -> TopicVector {
        if doc.is_empty() || sweeps == 0 {
            return self.prior_theta();
        }
        let kk = self.topics;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u32; kk];
        let mut z: Vec<usize> = doc
            .iter()
            .map(|_| {
                let k = rng.random_range(0..kk);
                counts[k] += 1;
                k
            })
            .collect();
        let alpha_sum: f64 = self.alpha.iter().sum();
        let len = doc.len() as f64;
        let mut cumulative = vec![0.0; kk];
        let mut theta = vec![0.0; kk];
        let mut samples = 0usize;
        for s in 1..=sweeps {
            for (n, &w) in doc.iter().enumerate() {
                counts[z[n]] -= 1;
                let row = &self.phi_by_word[w as usize * kk..(w as usize + 1) * kk];
                let mut total = 0.0;
                for k in 0..kk {
                    total += (f64::from(counts[k]) + self.alpha[k]) * row[k];
                    cumulative[k] = total;
                }
                let new = sample_cumulative(&cumulative, total, &mut rng);
                z[n] = new;
                counts[new] += 1;
            }
            if is_sample_sweep(s, sweeps) {
                for k in 0..kk {
                    theta[k] += (f64::from(counts[k]) + self.alpha[k]) / (len + alpha_sum);
                }
                samples += 1;
            }
        }
        TopicVector {
            theta: theta.into_iter().map(|t| t / samples as f64).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u32(self.topics as u32);
        w.f64_slice(&self.alpha);
        w.f64_slice(&self.beta);
        self.vocab.write(&mut w);
        w.f64_slice(&self.phi);
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, LdaError> {
        let corrupt = |m: String| LdaError::Format(ModelFormatError::Corrupt(m));
        let mut r = Reader::open(data, MAGIC, "LDAM", VERSION)?;
        let topics = r.u32("topic count")? as usize;
        let alpha = r.f64_vec("alpha")?;
        let beta = r.f64_vec("beta")?;
        let vocab = Vocabulary::read(&mut r)?;
        let phi = r.f64_vec("phi")?;
        r.finish()?;
        let v = vocab.len();
        if topics == 0 || alpha.len() != topics || beta.len() != v || phi.len() != topics * v {
            return Err(corrupt(format!(
                "shape mismatch: K={topics}, |alpha|={}, |beta|={}, V={v}, |phi|={}",
                alpha.len(),
                beta.len(),
                phi.len()
            )));
        }
        if alpha.iter().chain(&beta).any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(corrupt("non-positive prior".into()));
        }
        for k in 0..topics {
            let row = &phi[k * v..(k + 1) * v];
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p > 0.0)) || (sum - 1.0).abs() > 1e-6 {
                return Err(corrupt(format!("phi row {k} is not a distribution")));
            }
        }
        Ok(Self::assemble(topics, alpha, beta, phi, vocab))
    }
}
