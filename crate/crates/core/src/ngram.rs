// SPDX-License-Identifier: Apache-2.0

//! Count-based n-gram language model with fixed-weight interpolation.
//!
//! The conditional probability of a token given its last `n - 1` predecessors
//! mixes maximum-likelihood estimates of every order,
//!
//! ```text
//! P(w | ctx) = sum_k lambda_k * P_k(w | last k-1 tokens of ctx)
//! ```
//!
//! where `P_k` for `k >= 2` is `count(ctx_k, w) / count(ctx_k, *)` and the
//! unigram term is add-one smoothed, `(count(w) + 1) / (N + V)`. When a
//! context of some order never occurred in training its weight is handed down
//! to the next lower order, so every conditional distribution sums to one.
//! The add-one floor keeps every probability strictly positive, which is what
//! lets `<unk>` (and therefore unseen wording) raise perplexity instead of
//! producing an infinite score.
//!
//! Counts live in two hash tables keyed by packed `u64`s. Contexts are
//! interned into a reversed trie, newest token first, so the order-`k`
//! context of a position is reached by walking `k - 1` steps from the root.

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::codec::{ModelFormatError, Reader, Writer};
use crate::tokenizer::TokenSequence;
use crate::vocab::{Vocabulary, BOS_ID, EOS, EOS_ID};

const MAGIC: &[u8; 4] = b"NGLM";
const VERSION: u32 = 1;
const ROOT: u32 = 0;

/// Largest supported model order.
pub const MAX_ORDER: usize = 16;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("training corpus contains no tokens")]
    TrainingDataEmpty,
    #[error("cannot score an empty token sequence")]
    EmptyRecord,
    #[error("model order must be between 1 and {MAX_ORDER}")]
    InvalidOrder,
    #[error("interpolation weights must be {order} non-negative values summing to 1, got {weights:?}")]
    InvalidWeights { order: usize, weights: Vec<f64> },
    #[error(transparent)]
    Format(#[from] ModelFormatError),
}

/// Default interpolation weights, highest order first. Order 3 gives
/// `(0.8, 0.15, 0.05)`; other orders keep 0.8 on the top order and split each
/// remainder 3:1 between the next order and everything below it.
pub fn default_weights(order: usize) -> Vec<f64> {
    match order {
        0 => Vec::new(),
        1 => vec![1.0],
        2 => vec![0.8, 0.2],
        3 => vec![0.8, 0.15, 0.05],
        _ => {
            let mut w = vec![0.8];
            let mut rest = 0.2;
            for _ in 1..order - 1 {
                w.push(rest * 0.75);
                rest *= 0.25;
            }
            w.push(rest);
            w
        }
    }
}

fn check_weights(order: usize, weights: &[f64]) -> Result<(), LmError> {
    let sum: f64 = weights.iter().sum();
    let ok = weights.len() == order
        && weights.iter().all(|&l| l.is_finite() && l >= 0.0)
        && (sum - 1.0).abs() <= 1e-9;
    if ok {
        Ok(())
    } else {
        Err(LmError::InvalidWeights {
            order,
            weights: weights.to_vec(),
        })
    }
}

#[inline]
fn pack(a: u32, b: u32) -> u64 {
    (u64::from(a) << 32) | u64::from(b)
}

/// A token sequence together with its base-2 log-perplexity.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRecord {
    pub seq: TokenSequence,
    pub log2_ppx: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    /// Highest order first.
    weights: Vec<f64>,
    vocab: Vocabulary,
    /// `(parent node, older token) -> node`.
    children: FxHashMap<u64, u32>,
    /// `(node, token) -> count`.
    counts: FxHashMap<u64, u64>,
    /// Per-node sum of continuation counts; entry 0 is the token total `N`.
    totals: Vec<u64>,
}

impl NGramModel {
    /// Trains with [`default_weights`].
    pub fn train<I, S, T>(corpus: I, order: usize) -> Result<Self, LmError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[T]>,
        T: AsRef<str>,
    {
        Self::train_with_weights(corpus, order, default_weights(order))
    }

    pub fn train_with_weights<I, S, T>(
        corpus: I,
        order: usize,
        weights: Vec<f64>,
    ) -> Result<Self, LmError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[T]>,
        T: AsRef<str>,
    {
        if order == 0 || order > MAX_ORDER {
            return Err(LmError::InvalidOrder);
        }
        check_weights(order, &weights)?;
        let mut m = NGramModel {
            order,
            weights,
            vocab: Vocabulary::with_reserved(),
            children: FxHashMap::default(),
            counts: FxHashMap::default(),
            totals: vec![0],
        };
        let mut ids: Vec<u32> = Vec::new();
        for seq in corpus {
            let seq = seq.as_ref();
            if seq.is_empty() {
                continue;
            }
            ids.clear();
            ids.resize(order - 1, BOS_ID);
            ids.extend(seq.iter().map(|t| m.vocab.intern(t.as_ref())));
            ids.push(EOS_ID);
            for t in order - 1..ids.len() {
                m.observe(&ids[t + 1 - order..t], ids[t]);
            }
        }
        if m.totals[0] == 0 {
            return Err(LmError::TrainingDataEmpty);
        }
        Ok(m)
    }

    fn observe(&mut self, context: &[u32], w: u32) {
        let mut node = ROOT;
        for k in 0..self.order {
            *self.counts.entry(pack(node, w)).or_insert(0) += 1;
            self.totals[node as usize] += 1;
            if k + 1 == self.order {
                break;
            }
            let older = context[context.len() - 1 - k];
            let next_id = self.totals.len() as u32;
            node = *self.children.entry(pack(node, older)).or_insert(next_id);
            if node == next_id {
                self.totals.push(0);
            }
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Number of scored training tokens (`</s>` included).
    pub fn token_total(&self) -> u64 {
        self.totals[0]
    }

    /// Raw n-gram count. `context` is oldest-first and may be empty.
    pub fn count(&self, context: &[u32], w: u32) -> u64 {
        let mut node = ROOT;
        for &older in context.iter().rev() {
            match self.children.get(&pack(node, older)) {
                Some(&n) => node = n,
                None => return 0,
            }
        }
        self.counts.get(&pack(node, w)).copied().unwrap_or(0)
    }

    /// Total continuation count of `context` (oldest-first).
    pub fn context_total(&self, context: &[u32]) -> u64 {
        let mut node = ROOT;
        for &older in context.iter().rev() {
            match self.children.get(&pack(node, older)) {
                Some(&n) => node = n,
                None => return 0,
            }
        }
        self.totals[node as usize]
    }

    /// `P(w | context)`. Only the last `order - 1` ids of `context` (oldest
    /// first) are consulted; a shorter context behaves like an unseen one at
    /// the missing orders.
    pub fn conditional_prob(&self, context: &[u32], w: u32) -> f64 {
        let n = self.order;
        // nodes[d] is the interned context of the d most recent tokens
        let mut nodes = [ROOT; MAX_ORDER];
        let mut depth = 0;
        let max_depth = (n - 1).min(context.len());
        while depth < max_depth {
            let older = context[context.len() - 1 - depth];
            match self.children.get(&pack(nodes[depth], older)) {
                Some(&next) => {
                    depth += 1;
                    nodes[depth] = next;
                }
                None => break,
            }
        }

        let mut p = 0.0;
        let mut carry = 0.0;
        for k in (2..=n).rev() {
            let lambda = self.weights[n - k] + carry;
            if k - 1 <= depth {
                let node = nodes[k - 1];
                let c = self.counts.get(&pack(node, w)).copied().unwrap_or(0);
                p += lambda * (c as f64 / self.totals[node as usize] as f64);
                carry = 0.0;
            } else {
                carry = lambda;
            }
        }
        let c1 = self.counts.get(&pack(ROOT, w)).copied().unwrap_or(0);
        let denom = (self.totals[0] + self.vocab.len() as u64) as f64;
        p += (self.weights[n - 1] + carry) * ((c1 + 1) as f64 / denom);
        p.min(1.0)
    }

    /// Maps surface tokens to ids, unknown ones to `<unk>`.
    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| self.vocab.id_or_unk(t.as_ref()))
            .collect()
    }

    /// Base-2 log-perplexity of `tokens`: the mean negative log2 probability
    /// over every token plus the closing `</s>`. Context pads are not scored.
    pub fn log2_ppx<S: AsRef<str>>(&self, tokens: &[S]) -> Result<f64, LmError> {
        if tokens.is_empty() {
            return Err(LmError::EmptyRecord);
        }
        let n = self.order;
        let mut ids = Vec::with_capacity(tokens.len() + n);
        ids.resize(n - 1, BOS_ID);
        ids.extend(tokens.iter().map(|t| self.vocab.id_or_unk(t.as_ref())));
        ids.push(EOS_ID);
        let mut sum = 0.0;
        for t in n - 1..ids.len() {
            sum += self.conditional_prob(&ids[t + 1 - n..t], ids[t]).log2();
        }
        let scored = (ids.len() - (n - 1)) as f64;
        // -0.0 when every probability is exactly one
        Ok((-sum / scored).max(0.0))
    }

    pub fn score(&self, seq: &TokenSequence) -> Result<ScoredRecord, LmError> {
        Ok(ScoredRecord {
            log2_ppx: self.log2_ppx(&seq.tokens)?,
            seq: seq.clone(),
        })
    }

    /// Verifies that every context total equals the sum of its continuation
    /// counts.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut sums = vec![0u64; self.totals.len()];
        for (&key, &c) in &self.counts {
            let node = (key >> 32) as usize;
            let w = key as u32;
            if node >= sums.len() || w as usize >= self.vocab.len() {
                return Err(format!("count entry ({node}, {w}) out of range"));
            }
            sums[node] += c;
        }
        if let Some(node) = (0..sums.len()).find(|&i| sums[i] != self.totals[i]) {
            return Err(format!(
                "context {node}: total {} but continuations sum to {}",
                self.totals[node], sums[node]
            ));
        }
        let unigram: u64 = self
            .vocab
            .iter()
            .map(|(id, _)| self.count(&[], id))
            .sum();
        if unigram != self.totals[0] {
            return Err("unigram counts do not sum to the token total".into());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u32(self.order as u32);
        w.f64_slice(&self.weights);
        self.vocab.write(&mut w);

        let mut nodes: Vec<(u32, u64)> = self.children.iter().map(|(&k, &v)| (v, k)).collect();
        nodes.sort_unstable();
        w.len_prefix(nodes.len());
        for (_, key) in nodes {
            w.u64(key);
        }

        let mut counts: Vec<(u64, u64)> = self.counts.iter().map(|(&k, &v)| (k, v)).collect();
        counts.sort_unstable();
        w.len_prefix(counts.len());
        for (key, c) in counts {
            w.u64(key);
            w.u64(c);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, LmError> {
        let mut r = Reader::open(data, MAGIC, "NGLM", VERSION)?;
        let order = r.u32("order")? as usize;
        let weights = r.f64_vec("weights")?;
        if order == 0 || order > MAX_ORDER || check_weights(order, &weights).is_err() {
            return Err(ModelFormatError::Corrupt("order or interpolation weights".into()).into());
        }
        let vocab = Vocabulary::read(&mut r)?;
        if !vocab.has_reserved() || vocab.token(EOS_ID) != Some(EOS) {
            return Err(ModelFormatError::Corrupt("vocabulary lacks reserved tokens".into()).into());
        }

        let n_nodes = r.len_prefix(8, "context table")?;
        let mut children = FxHashMap::default();
        children.reserve(n_nodes);
        for i in 0..n_nodes {
            let key = r.u64("context entry")?;
            let parent = (key >> 32) as usize;
            if parent > i || (key as u32) as usize >= vocab.len() {
                return Err(ModelFormatError::Corrupt(format!("context entry {i}")).into());
            }
            if children.insert(key, (i + 1) as u32).is_some() {
                return Err(ModelFormatError::Corrupt(format!("duplicate context {i}")).into());
            }
        }

        let n_counts = r.len_prefix(16, "count table")?;
        let mut counts = FxHashMap::default();
        counts.reserve(n_counts);
        let mut totals = vec![0u64; n_nodes + 1];
        for _ in 0..n_counts {
            let key = r.u64("count key")?;
            let c = r.u64("count")?;
            let node = (key >> 32) as usize;
            if node > n_nodes || (key as u32) as usize >= vocab.len() || c == 0 {
                return Err(ModelFormatError::Corrupt("count entry".into()).into());
            }
            totals[node] = totals[node]
                .checked_add(c)
                .ok_or_else(|| ModelFormatError::Corrupt("count overflow".into()))?;
            counts.insert(key, c);
        }
        r.finish()?;
        if totals[0] == 0 || totals.contains(&0) {
            return Err(ModelFormatError::Corrupt("context without continuations".into()).into());
        }
        Ok(NGramModel {
            order,
            weights,
            vocab,
            children,
            counts,
            totals,
        })
    }
}
