// SPDX-License-Identifier: Apache-2.0

//! End-to-end orchestration: training a bundle, classifying records,
//! evaluation against true labels, and stage throughput benchmarks.
//!
//! A bundle is a directory:
//!
//! ```text
//! manifest.json   versions, seeds, threshold, rules, sha256 of each model file
//! lm.nglm         n-gram language model
//! lda.ldam        topic model
//! mlp.mlpc        classifier
//! ```

use std::hash::Hasher;
use std::path::Path;
use std::time::Instant;

use rustc_hash::FxHasher;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{LabeledRecord, LogClass};
use crate::filter::{calibrate_threshold, map_ordered, per_core, worker_pool, FilterConfig, FilterError};
use crate::lda::{build_corpus, LdaConfig, LdaError, LdaModel, TopicVector, DEFAULT_INFER_SWEEPS};
use crate::metrics::{ConfusionMatrix, EvalMetrics};
use crate::mlp::{argmax, Example, Mlp, MlpError, TrainConfig};
use crate::ngram::{LmError, NGramModel};
use crate::records::RawRecord;
use crate::tokenizer::{NormalizationRules, RulesError, TokenSequence, Tokenizer};

pub const MANIFEST: &str = "manifest.json";
pub const LM_FILE: &str = "lm.nglm";
pub const LDA_FILE: &str = "lda.ldam";
pub const MLP_FILE: &str = "mlp.mlpc";
const BUNDLE_VERSION: u32 = 1;

/// Below this many bytes a benchmark still runs but is flagged as unstable.
pub const BENCH_MIN_BYTES: u64 = 10 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Lda(#[from] LdaError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Rules(#[from] RulesError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("bundle file {file} does not match its manifest hash (expected {expected}, found {found})")]
    BundleIntegrity {
        file: String,
        expected: String,
        found: String,
    },
    #[error("inconsistent bundle: {0}")]
    BundleConsistency(String),
    #[error("no training records survive normalization")]
    TrainingDataEmpty,
    #[error("no records survive the filter; nothing to train the classifier on")]
    NothingKept,
    #[error("evaluation set is empty")]
    EvalDataEmpty,
    #[error("benchmark corpus too small: {bytes} bytes")]
    BenchDataTooSmall { bytes: u64 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// How the perplexity cutoff is chosen when training a bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdChoice {
    Fixed(f64),
    /// Calibrate on the training scores so this share of records is kept.
    KeepFraction(f64),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub rules: NormalizationRules,
    pub lm_order: usize,
    /// `None` uses the default interpolation weights for the order.
    pub lm_weights: Option<Vec<f64>>,
    pub threshold: ThresholdChoice,
    pub lda: LdaConfig,
    pub infer_sweeps: usize,
    pub infer_seed: u64,
    pub hidden: Vec<usize>,
    pub mlp: TrainConfig,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rules: NormalizationRules::default(),
            lm_order: 3,
            lm_weights: None,
            threshold: ThresholdChoice::Fixed(crate::filter::DEFAULT_THRESHOLD),
            lda: LdaConfig::default(),
            infer_sweeps: DEFAULT_INFER_SWEEPS,
            infer_seed: 0,
            hidden: vec![64, 64, 64],
            mlp: TrainConfig::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub bundle_version: u32,
    pub crate_version: String,
    pub created_unix: u64,
    pub threshold: f64,
    pub lm_order: usize,
    pub topics: usize,
    pub lda_seed: u64,
    pub infer_sweeps: usize,
    pub infer_seed: u64,
    pub mlp_dims: Vec<usize>,
    pub mlp_seed: u64,
    /// Normalization table in the TOML rules format.
    pub rules: String,
    pub files: Vec<FileEntry>,
}

/// Outcome of classifying one record.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// Below the perplexity threshold, or empty after normalization
    /// (`log2_ppx` is `None` then).
    Filtered { log2_ppx: Option<f64> },
    Classified {
        class: LogClass,
        probs: Vec<f64>,
        log2_ppx: f64,
    },
}

impl Prediction {
    /// Filtered records count as [`LogClass::Information`].
    pub fn effective_class(&self) -> LogClass {
        match self {
            Prediction::Filtered { .. } => LogClass::Information,
            Prediction::Classified { class, .. } => *class,
        }
    }

    pub fn is_filtered(&self) -> bool {
        matches!(self, Prediction::Filtered { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub records: usize,
    pub empty_records: usize,
    pub threshold: f64,
    pub kept: usize,
    pub kept_per_class: [usize; LogClass::COUNT],
    pub lda_vocab: usize,
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineBundle {
    pub tokenizer: Tokenizer,
    pub lm: NGramModel,
    pub filter: FilterConfig,
    pub lda: LdaModel,
    pub mlp: Mlp,
    pub manifest: Manifest,
}

fn seq_seed(base: u64, tokens: &[String]) -> u64 {
    let mut h = FxHasher::default();
    for t in tokens {
        h.write(t.as_bytes());
        h.write_u8(0xff);
    }
    base ^ h.finish()
}

fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

impl PipelineBundle {
    /// Trains all three models from labeled records, in order: language model
    /// on every record, threshold, topic model on the records that survive the
    /// filter, classifier on their topic vectors and true labels.
    pub fn train(
        records: &[LabeledRecord],
        cfg: &PipelineConfig,
    ) -> Result<(Self, TrainSummary), PipelineError> {
        let tokenizer = Tokenizer::new(cfg.rules.clone());
        let pool = worker_pool(cfg.workers.max(1));
        let seqs = tokenize_all(&tokenizer, records, pool.as_ref());
        let nonempty: Vec<&Vec<String>> = seqs.iter().flatten().collect();
        if nonempty.is_empty() {
            return Err(PipelineError::TrainingDataEmpty);
        }

        let weights = cfg
            .lm_weights
            .clone()
            .unwrap_or_else(|| crate::ngram::default_weights(cfg.lm_order));
        let lm = NGramModel::train_with_weights(nonempty.iter().copied(), cfg.lm_order, weights)?;

        let scores = score_all(&lm, &seqs, pool.as_ref());
        let threshold = match cfg.threshold {
            ThresholdChoice::Fixed(t) => t,
            ThresholdChoice::KeepFraction(f) => {
                let flat: Vec<f64> = scores.iter().flatten().copied().collect();
                calibrate_threshold(&flat, f)?
            }
        };
        let filter = FilterConfig {
            threshold,
            workers: cfg.workers.max(1),
            ..Default::default()
        };
        filter.validate()?;

        let kept = kept_indices(&scores, &filter)?;
        let (vocab, docs) = build_corpus(kept.iter().map(|&i| seqs[i].as_ref().expect("kept")));
        let lda = LdaModel::train(&docs, vocab, &cfg.lda)?;

        let staged = Staged {
            tokenizer,
            lm,
            filter,
            lda,
        };
        staged.fit_classifier(records, &seqs, &kept, cfg, pool.as_ref())
    }

    /// Trains only the classifier, on top of an existing language model,
    /// threshold and topic model. `cfg` supplies the fold-in and classifier
    /// settings; its language-model and topic-model fields are recorded in
    /// the manifest but not used.
    pub fn train_classifier(
        tokenizer: Tokenizer,
        lm: NGramModel,
        filter: FilterConfig,
        lda: LdaModel,
        records: &[LabeledRecord],
        cfg: &PipelineConfig,
    ) -> Result<(Self, TrainSummary), PipelineError> {
        filter.validate()?;
        let pool = worker_pool(cfg.workers.max(1));
        let seqs = tokenize_all(&tokenizer, records, pool.as_ref());
        if seqs.iter().all(Option::is_none) {
            return Err(PipelineError::TrainingDataEmpty);
        }
        let scores = score_all(&lm, &seqs, pool.as_ref());
        let kept = kept_indices(&scores, &filter)?;
        let staged = Staged {
            tokenizer,
            lm,
            filter,
            lda,
        };
        staged.fit_classifier(records, &seqs, &kept, cfg, pool.as_ref())
    }

    /// Assembles a bundle from separately trained models.
    pub fn assemble(
        tokenizer: Tokenizer,
        lm: NGramModel,
        filter: FilterConfig,
        lda: LdaModel,
        mlp: Mlp,
        infer_sweeps: usize,
        infer_seed: u64,
    ) -> Result<Self, PipelineError> {
        check_consistency(&lda, &mlp)?;
        let manifest = Manifest {
            bundle_version: BUNDLE_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").to_owned(),
            created_unix: unix_now(),
            threshold: filter.threshold,
            lm_order: lm.order(),
            topics: lda.topics(),
            lda_seed: 0,
            infer_sweeps,
            infer_seed,
            mlp_dims: mlp.dims().to_vec(),
            mlp_seed: 0,
            rules: tokenizer.rules().to_toml(),
            files: Vec::new(),
        };
        Ok(PipelineBundle {
            tokenizer,
            lm,
            filter,
            lda,
            mlp,
            manifest,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.filter.threshold
    }

    /// Topic vector fold-in for a token sequence. The sampler seed is derived
    /// from the tokens, so results do not depend on record order or threads.
    pub fn embed(&self, tokens: &[String]) -> TopicVector {
        self.lda.infer(
            tokens,
            self.manifest.infer_sweeps,
            seq_seed(self.manifest.infer_seed, tokens),
        )
    }

    /// Stage two only: topic vector and classifier for already-kept tokens.
    pub fn classify_kept(&self, tokens: &[String]) -> (LogClass, Vec<f64>) {
        let theta = self.embed(tokens);
        let probs = self.mlp.forward(&theta.theta).expect("bundle consistency checked");
        let class = LogClass::from_index(argmax(&probs)).expect("three-way output");
        (class, probs)
    }

    pub fn classify(&self, record: &RawRecord) -> Prediction {
        match self.tokenizer.tokenize(record) {
            Ok(seq) => self.classify_tokens(&seq),
            Err(_) => Prediction::Filtered { log2_ppx: None },
        }
    }

    /// [`classify`](Self::classify) over many records, in input order.
    pub fn classify_all(&self, records: &[RawRecord], workers: usize) -> Vec<Prediction> {
        let pool = worker_pool(workers.max(1));
        map_ordered(pool.as_ref(), records.iter().collect(), |r| self.classify(r))
    }

    pub fn classify_tokens(&self, seq: &TokenSequence) -> Prediction {
        let s = self.lm.log2_ppx(&seq.tokens).expect("non-empty");
        if !self.filter.keeps(s) {
            return Prediction::Filtered { log2_ppx: Some(s) };
        }
        let (class, probs) = self.classify_kept(&seq.tokens);
        Prediction::Classified {
            class,
            probs,
            log2_ppx: s,
        }
    }

    /// Classifies every record of a labeled test set. Filtered records enter
    /// the full matrix as predicted-Information; the kept-only matrix covers
    /// just the records that reached the classifier.
    pub fn evaluate(&self, test: &[LabeledRecord], workers: usize) -> Result<EvalReport, PipelineError> {
        if test.is_empty() {
            return Err(PipelineError::EvalDataEmpty);
        }
        let workers = workers.max(1);
        let pool = worker_pool(workers);

        let t1 = Instant::now();
        let stage1: Vec<Option<(Vec<String>, f64)>> = map_ordered(pool.as_ref(), test.iter().collect(), |r| {
            let tokens = self.tokenizer.tokenize_text(&r.text);
            if tokens.is_empty() {
                return None;
            }
            let s = self.lm.log2_ppx(&tokens).expect("non-empty");
            Some((tokens, s))
        });
        let stage1_secs = t1.elapsed().as_secs_f64();

        let kept_idx: Vec<usize> = (0..test.len())
            .filter(|&i| stage1[i].as_ref().is_some_and(|(_, s)| self.filter.keeps(*s)))
            .collect();
        let t2 = Instant::now();
        let stage2: Vec<LogClass> = map_ordered(pool.as_ref(), kept_idx.clone(), |i| {
            let (tokens, _) = stage1[i].as_ref().expect("kept");
            self.classify_kept(tokens).0
        });
        let stage2_secs = t2.elapsed().as_secs_f64();

        let mut full = ConfusionMatrix::default();
        let mut kept_only = ConfusionMatrix::default();
        let mut predicted = vec![LogClass::Information; test.len()];
        for (&i, &class) in kept_idx.iter().zip(&stage2) {
            predicted[i] = class;
            kept_only.add(test[i].label, class);
        }
        for (r, &p) in test.iter().zip(&predicted) {
            full.add(r.label, p);
        }
        let empty = stage1.iter().filter(|s| s.is_none()).count() as u64;

        let bytes_all: u64 = test.iter().map(|r| r.text.len() as u64).sum();
        let bytes_kept: u64 = kept_idx.iter().map(|&i| test[i].text.len() as u64).sum();
        let stage1_tp = per_core(bytes_all, stage1_secs, workers);
        let stage2_tp = per_core(bytes_kept, stage2_secs, workers);
        Ok(EvalReport {
            total: test.len() as u64,
            kept: kept_idx.len() as u64,
            filtered: (test.len() - kept_idx.len()) as u64,
            empty_records: empty,
            threshold: self.filter.threshold,
            full: full.metrics(),
            kept_only: kept_only.metrics(),
            workers,
            stage1_bytes_per_sec_per_core: stage1_tp,
            stage2_bytes_per_sec_per_core: stage2_tp,
            speed_ratio: if stage2_tp > 0.0 { stage1_tp / stage2_tp } else { 0.0 },
        })
    }

    /// Throughput of each stage on its own. Stage one (normalize + score)
    /// runs over every record; stage two (normalize + fold-in + classifier)
    /// runs over the first `stage2_sample` kept records and is charged for
    /// their original bytes.
    pub fn bench(
        &self,
        records: &[RawRecord],
        workers: usize,
        stage2_sample: usize,
    ) -> Result<BenchReport, PipelineError> {
        let bytes: u64 = records.iter().map(|r| r.text.len() as u64).sum();
        if records.is_empty() || bytes == 0 {
            return Err(PipelineError::BenchDataTooSmall { bytes });
        }
        let undersized = bytes < BENCH_MIN_BYTES;
        if undersized {
            log::warn!("benchmark corpus is only {bytes} bytes; timings will be noisy");
        }
        let workers = workers.max(1);
        let pool = worker_pool(workers);

        let t1 = Instant::now();
        let verdicts: Vec<Option<bool>> = map_ordered(pool.as_ref(), records.iter().collect(), |r| {
            let tokens = self.tokenizer.tokenize_text(&r.text);
            (!tokens.is_empty()).then(|| self.filter.keeps(self.lm.log2_ppx(&tokens).expect("non-empty")))
        });
        let stage1_secs = t1.elapsed().as_secs_f64();

        let kept_lines: Vec<u64> = records
            .iter()
            .zip(&verdicts)
            .filter(|(_, v)| **v == Some(true))
            .map(|(r, _)| r.line_no)
            .collect();
        let mut digest = Sha256::new();
        for l in &kept_lines {
            digest.update(l.to_le_bytes());
        }

        // Stage two sees kept records in production; fall back to any
        // non-empty record when nothing passes the threshold.
        let want = if kept_lines.is_empty() { None } else { Some(true) };
        let sample: Vec<&RawRecord> = records
            .iter()
            .zip(&verdicts)
            .filter(|(_, v)| v.is_some() && (want.is_none() || **v == want))
            .map(|(r, _)| r)
            .take(stage2_sample.max(1))
            .collect();
        let sample_bytes: u64 = sample.iter().map(|r| r.text.len() as u64).sum();
        let t2 = Instant::now();
        let _classes: Vec<LogClass> = map_ordered(pool.as_ref(), sample.clone(), |r| {
            let tokens = self.tokenizer.tokenize_text(&r.text);
            self.classify_kept(&tokens).0
        });
        let stage2_secs = t2.elapsed().as_secs_f64();

        let stage1_tp = per_core(bytes, stage1_secs, workers);
        let stage2_tp = per_core(sample_bytes, stage2_secs, workers);
        Ok(BenchReport {
            records: records.len() as u64,
            bytes,
            undersized,
            workers,
            kept: kept_lines.len() as u64,
            kept_digest: hex::encode(digest.finalize()),
            stage1_secs,
            stage1_bytes_per_sec_per_core: stage1_tp,
            stage2_records: sample.len() as u64,
            stage2_bytes: sample_bytes,
            stage2_secs,
            stage2_bytes_per_sec_per_core: stage2_tp,
            speed_ratio: if stage2_tp > 0.0 { stage1_tp / stage2_tp } else { 0.0 },
        })
    }

    pub fn save(&mut self, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let blobs = [
            (LM_FILE, self.lm.to_bytes()),
            (LDA_FILE, self.lda.to_bytes()),
            (MLP_FILE, self.mlp.to_bytes()),
        ];
        self.manifest.files.clear();
        for (name, data) in &blobs {
            let path = dir.join(name);
            std::fs::write(&path, data).map_err(io_err(&path))?;
            self.manifest.files.push(FileEntry {
                name: (*name).to_owned(),
                sha256: sha256_hex(data),
            });
        }
        let path = dir.join(MANIFEST);
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&path, json).map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| PipelineError::Manifest(e.to_string()))?;
        if manifest.bundle_version != BUNDLE_VERSION {
            return Err(PipelineError::Manifest(format!(
                "bundle version {} (this build reads {BUNDLE_VERSION})",
                manifest.bundle_version
            )));
        }
        let read = |name: &str| -> Result<Vec<u8>, PipelineError> {
            let entry = manifest
                .files
                .iter()
                .find(|f| f.name == name)
                .ok_or_else(|| PipelineError::Manifest(format!("no entry for {name}")))?;
            let path = dir.join(name);
            let data = std::fs::read(&path).map_err(io_err(&path))?;
            let found = sha256_hex(&data);
            if found != entry.sha256 {
                return Err(PipelineError::BundleIntegrity {
                    file: name.to_owned(),
                    expected: entry.sha256.clone(),
                    found,
                });
            }
            Ok(data)
        };
        let lm = NGramModel::from_bytes(&read(LM_FILE)?)?;
        let lda = LdaModel::from_bytes(&read(LDA_FILE)?)?;
        let mlp = Mlp::from_bytes(&read(MLP_FILE)?)?;
        check_consistency(&lda, &mlp)?;
        if manifest.topics != lda.topics() || manifest.mlp_dims != mlp.dims() {
            return Err(PipelineError::BundleConsistency(
                "manifest shapes disagree with model files".into(),
            ));
        }
        let rules = NormalizationRules::from_toml(&manifest.rules)?;
        let filter = FilterConfig {
            threshold: manifest.threshold,
            ..Default::default()
        };
        filter.validate()?;
        Ok(PipelineBundle {
            tokenizer: Tokenizer::new(rules),
            lm,
            filter,
            lda,
            mlp,
            manifest,
        })
    }
}

fn tokenize_all(
    tokenizer: &Tokenizer,
    records: &[LabeledRecord],
    pool: Option<&rayon::ThreadPool>,
) -> Vec<Option<Vec<String>>> {
    map_ordered(pool, records.iter().collect(), |r| {
        let t = tokenizer.tokenize_text(&r.text);
        (!t.is_empty()).then_some(t)
    })
}

fn score_all(
    lm: &NGramModel,
    seqs: &[Option<Vec<String>>],
    pool: Option<&rayon::ThreadPool>,
) -> Vec<Option<f64>> {
    map_ordered(pool, seqs.iter().collect(), |s| {
        s.as_ref().map(|t| lm.log2_ppx(t).expect("non-empty"))
    })
}

fn kept_indices(scores: &[Option<f64>], filter: &FilterConfig) -> Result<Vec<usize>, PipelineError> {
    let kept: Vec<usize> = (0..scores.len())
        .filter(|&i| scores[i].is_some_and(|s| filter.keeps(s)))
        .collect();
    if kept.is_empty() {
        return Err(PipelineError::NothingKept);
    }
    Ok(kept)
}

/// Models of the first stages, waiting for a classifier.
struct Staged {
    tokenizer: Tokenizer,
    lm: NGramModel,
    filter: FilterConfig,
    lda: LdaModel,
}

impl Staged {
    fn fit_classifier(
        self,
        records: &[LabeledRecord],
        seqs: &[Option<Vec<String>>],
        kept: &[usize],
        cfg: &PipelineConfig,
        pool: Option<&rayon::ThreadPool>,
    ) -> Result<(PipelineBundle, TrainSummary), PipelineError> {
        let Staged {
            tokenizer,
            lm,
            filter,
            lda,
        } = self;
        let mut kept_per_class = [0usize; LogClass::COUNT];
        for &i in kept {
            kept_per_class[records[i].label.index()] += 1;
        }
        let examples: Vec<Example> = map_ordered(pool, kept.to_vec(), |i| {
            let tokens = seqs[i].as_ref().expect("kept");
            let theta = lda.infer(tokens, cfg.infer_sweeps, seq_seed(cfg.infer_seed, tokens));
            Example::new(theta.theta, records[i].label.index())
        });
        let mut dims = vec![lda.topics()];
        dims.extend(&cfg.hidden);
        dims.push(LogClass::COUNT);
        let outcome = Mlp::train(&dims, &examples, &cfg.mlp)?;

        let manifest = Manifest {
            bundle_version: BUNDLE_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").to_owned(),
            created_unix: unix_now(),
            threshold: filter.threshold,
            lm_order: lm.order(),
            topics: lda.topics(),
            lda_seed: cfg.lda.seed,
            infer_sweeps: cfg.infer_sweeps,
            infer_seed: cfg.infer_seed,
            mlp_dims: dims,
            mlp_seed: cfg.mlp.seed,
            rules: tokenizer.rules().to_toml(),
            files: Vec::new(),
        };
        let summary = TrainSummary {
            records: records.len(),
            empty_records: seqs.iter().filter(|s| s.is_none()).count(),
            threshold: filter.threshold,
            kept: kept.len(),
            kept_per_class,
            lda_vocab: lda.vocab().len(),
            loss_trace: outcome.loss_trace,
        };
        let bundle = PipelineBundle {
            tokenizer,
            lm,
            filter,
            lda,
            mlp: outcome.model,
            manifest,
        };
        Ok((bundle, summary))
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn check_consistency(lda: &LdaModel, mlp: &Mlp) -> Result<(), PipelineError> {
    if mlp.inputs() != lda.topics() {
        return Err(PipelineError::BundleConsistency(format!(
            "topic model has K={} but classifier expects {} inputs",
            lda.topics(),
            mlp.inputs()
        )));
    }
    if mlp.classes() != LogClass::COUNT {
        return Err(PipelineError::BundleConsistency(format!(
            "classifier has {} outputs, expected {}",
            mlp.classes(),
            LogClass::COUNT
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub total: u64,
    pub kept: u64,
    pub filtered: u64,
    pub empty_records: u64,
    pub threshold: f64,
    /// Every record; filtered ones as predicted-Information.
    pub full: EvalMetrics,
    /// Only records that reached the classifier.
    pub kept_only: EvalMetrics,
    pub workers: usize,
    pub stage1_bytes_per_sec_per_core: f64,
    pub stage2_bytes_per_sec_per_core: f64,
    pub speed_ratio: f64,
}

impl EvalReport {
    pub fn without_timings(&self) -> Self {
        EvalReport {
            workers: 0,
            stage1_bytes_per_sec_per_core: 0.0,
            stage2_bytes_per_sec_per_core: 0.0,
            speed_ratio: 0.0,
            ..self.clone()
        }
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "records {}  kept {}  filtered {}  (threshold {:.4})",
            self.total, self.kept, self.filtered, self.threshold
        )?;
        writeln!(f, "\nall records (filtered counted as {}):", LogClass::Information)?;
        write!(f, "{}", self.full)?;
        writeln!(f, "\nkept records only:")?;
        write!(f, "{}", self.kept_only)?;
        writeln!(
            f,
            "\nstage 1 {:.0} B/s/core, stage 2 {:.0} B/s/core, ratio {:.1}x",
            self.stage1_bytes_per_sec_per_core, self.stage2_bytes_per_sec_per_core, self.speed_ratio
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub records: u64,
    pub bytes: u64,
    /// Corpus below [`BENCH_MIN_BYTES`].
    pub undersized: bool,
    pub workers: usize,
    pub kept: u64,
    /// sha256 over the kept records' line numbers.
    pub kept_digest: String,
    pub stage1_secs: f64,
    pub stage1_bytes_per_sec_per_core: f64,
    pub stage2_records: u64,
    pub stage2_bytes: u64,
    pub stage2_secs: f64,
    pub stage2_bytes_per_sec_per_core: f64,
    pub speed_ratio: f64,
}
