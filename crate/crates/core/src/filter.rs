// SPDX-License-Identifier: Apache-2.0

//! Stage one: perplexity pre-filter.
//!
//! Records scoring at or above the threshold are kept for classification;
//! everything below it is considered a common, trivial message. Scoring fans
//! out over a rayon pool in fixed-size chunks and results are re-emitted in
//! input order, so the kept set never depends on the worker count.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::LogClass;
use crate::ngram::NGramModel;
use crate::records::{RawRecord, RecordError};
use crate::tokenizer::{TokenSequence, Tokenizer};

/// Default base-2 log-perplexity cutoff.
pub const DEFAULT_THRESHOLD: f64 = 11.0;
pub const DEFAULT_BIN_WIDTH: f64 = 0.25;
const CHUNK: usize = 2048;
const MAX_MALFORMED_LINES: usize = 100;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid filter config: {0}")]
    Config(String),
    #[error("histogram bin width must be positive, got {0}")]
    BinWidth(f64),
    #[error("keep fraction must lie in (0, 1], got {0}")]
    KeepFraction(f64),
    #[error("no scores to calibrate on")]
    CalibrationDataEmpty,
    #[error("input failed after {} records: {source}", partial.total_in)]
    Input {
        #[source]
        source: RecordError,
        partial: Box<FilterReport>,
    },
    #[error("output failed after {} records: {source}", partial.total_in)]
    Output {
        #[source]
        source: std::io::Error,
        partial: Box<FilterReport>,
    },
}

impl FilterError {
    pub fn partial_report(&self) -> Option<&FilterReport> {
        match self {
            FilterError::Input { partial, .. } | FilterError::Output { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub threshold: f64,
    pub workers: usize,
    pub bin_width: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            threshold: DEFAULT_THRESHOLD,
            workers: 1,
            bin_width: DEFAULT_BIN_WIDTH,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        // -inf is allowed: it keeps everything
        if self.threshold.is_nan() || self.threshold == f64::INFINITY {
            return Err(FilterError::Config(format!("threshold {}", self.threshold)));
        }
        if self.workers == 0 {
            return Err(FilterError::Config("worker count must be at least 1".into()));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(FilterError::BinWidth(self.bin_width));
        }
        Ok(())
    }

    pub fn keeps(&self, log2_ppx: f64) -> bool {
        log2_ppx >= self.threshold
    }
}

/// Counts per half-open bin `[k * width, (k + 1) * width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: BTreeMap<i64, u64>,
}

#[derive(Serialize)]
struct BinOut {
    lower: f64,
    count: u64,
}

impl Serialize for Histogram {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out {
            bin_width: f64,
            total: u64,
            bins: Vec<BinOut>,
        }
        Out {
            bin_width: self.bin_width,
            total: self.total(),
            bins: self
                .counts
                .iter()
                .map(|(&k, &count)| BinOut {
                    lower: k as f64 * self.bin_width,
                    count,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl Histogram {
    pub fn new(bin_width: f64) -> Result<Self, FilterError> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(FilterError::BinWidth(bin_width));
        }
        Ok(Histogram {
            bin_width,
            counts: BTreeMap::new(),
        })
    }

    pub fn bin_of(&self, score: f64) -> i64 {
        (score / self.bin_width).floor() as i64
    }

    pub fn add(&mut self, score: f64) {
        let k = self.bin_of(score);
        *self.counts.entry(k).or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (&k, &c) in &other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
    }
}

/// Histogram key: the preset label name, or `unlabeled`.
pub fn label_key(label: Option<LogClass>) -> &'static str {
    label.map_or("unlabeled", LogClass::label)
}

/// Bins scores per preset label.
pub fn histogram<I>(scores: I, bin_width: f64) -> Result<BTreeMap<String, Histogram>, FilterError>
where
    I: IntoIterator<Item = (Option<LogClass>, f64)>,
{
    let empty = Histogram::new(bin_width)?;
    let mut out: BTreeMap<String, Histogram> = BTreeMap::new();
    for (label, score) in scores {
        out.entry(label_key(label).to_owned())
            .or_insert_with(|| empty.clone())
            .add(score);
    }
    Ok(out)
}

/// Threshold that keeps the top `keep_fraction` of `scores`: the score at
/// rank `N - ceil(keep_fraction * N)` in ascending order. Ties with that
/// score are kept as well, so at least the requested share passes.
pub fn calibrate_threshold(scores: &[f64], keep_fraction: f64) -> Result<f64, FilterError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(FilterError::KeepFraction(keep_fraction));
    }
    if scores.is_empty() {
        return Err(FilterError::CalibrationDataEmpty);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let keep = ((keep_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    Ok(sorted[n - keep])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterReport {
    pub threshold: f64,
    pub workers: usize,
    /// Well-formed records seen.
    pub total_in: u64,
    pub kept: u64,
    /// Scored below the threshold.
    pub filtered: u64,
    /// Records with no tokens after normalization; counted as filtered.
    pub empty_records: u64,
    /// Lines the reader rejected (not part of `total_in`).
    pub malformed: u64,
    /// First line numbers of malformed input.
    pub malformed_lines: Vec<u64>,
    /// Score distribution per preset label, over every scored record.
    pub histograms: BTreeMap<String, Histogram>,
    pub bytes_processed: u64,
    pub wall_time_secs: f64,
    /// `bytes_processed / (wall_time_secs * workers)`.
    pub bytes_per_sec_per_core: f64,
}

impl FilterReport {
    fn new(cfg: &FilterConfig) -> Self {
        FilterReport {
            threshold: cfg.threshold,
            workers: cfg.workers,
            total_in: 0,
            kept: 0,
            filtered: 0,
            empty_records: 0,
            malformed: 0,
            malformed_lines: Vec::new(),
            histograms: BTreeMap::new(),
            bytes_processed: 0,
            wall_time_secs: 0.0,
            bytes_per_sec_per_core: 0.0,
        }
    }

    fn finish(&mut self, started: Instant) {
        self.wall_time_secs = started.elapsed().as_secs_f64();
        self.bytes_per_sec_per_core = per_core(self.bytes_processed, self.wall_time_secs, self.workers);
    }

    /// Same report with timing fields zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        FilterReport {
            wall_time_secs: 0.0,
            bytes_per_sec_per_core: 0.0,
            workers: 0,
            ..self.clone()
        }
    }
}

/// What happened to one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub record: RawRecord,
    /// `None` when the record normalized to no tokens.
    pub tokens: Option<TokenSequence>,
    pub log2_ppx: Option<f64>,
    pub kept: bool,
}

fn judge(record: RawRecord, model: &NGramModel, tokenizer: &Tokenizer, cfg: &FilterConfig) -> Verdict {
    match tokenizer.tokenize(&record) {
        Ok(seq) => {
            let s = model
                .log2_ppx(&seq.tokens)
                .expect("tokenizer never yields empty sequences");
            Verdict {
                record,
                tokens: Some(seq),
                log2_ppx: Some(s),
                kept: cfg.keeps(s),
            }
        }
        Err(_) => Verdict {
            record,
            tokens: None,
            log2_ppx: None,
            kept: false,
        },
    }
}

pub(crate) fn worker_pool(workers: usize) -> Option<rayon::ThreadPool> {
    (workers > 1).then(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool")
    })
}

/// Runs `f` over `items` on `pool` (or inline), preserving order.
pub(crate) fn map_ordered<T, U, F>(pool: Option<&rayon::ThreadPool>, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    match pool {
        Some(p) => p.install(|| items.into_par_iter().map(&f).collect()),
        None => items.into_iter().map(f).collect(),
    }
}

/// Streams `records` through the filter, calling `sink` once per record in
/// input order. Reader parse errors are tallied as malformed; an I/O error
/// from the reader or the sink stops the run and returns the partial report.
pub fn filter_stream<I, F>(
    records: I,
    model: &NGramModel,
    tokenizer: &Tokenizer,
    cfg: &FilterConfig,
    mut sink: F,
) -> Result<FilterReport, FilterError>
where
    I: IntoIterator<Item = Result<RawRecord, RecordError>>,
    F: FnMut(Verdict) -> std::io::Result<()>,
{
    cfg.validate()?;
    let started = Instant::now();
    let pool = worker_pool(cfg.workers);
    let empty_hist = Histogram::new(cfg.bin_width)?;
    let mut report = FilterReport::new(cfg);
    let mut iter = records.into_iter();
    let mut input_error = None;

    loop {
        let mut chunk = Vec::with_capacity(CHUNK);
        while chunk.len() < CHUNK {
            match iter.next() {
                Some(Ok(r)) => chunk.push(r),
                Some(Err(RecordError::Parse { line_no, .. })) => {
                    report.malformed += 1;
                    if report.malformed_lines.len() < MAX_MALFORMED_LINES {
                        report.malformed_lines.push(line_no);
                    }
                }
                Some(Err(e)) => {
                    input_error = Some(e);
                    break;
                }
                None => break,
            }
        }
        if chunk.is_empty() && input_error.is_none() {
            break;
        }
        let last = chunk.len() < CHUNK;
        let verdicts = map_ordered(pool.as_ref(), chunk, |r| judge(r, model, tokenizer, cfg));
        for v in verdicts {
            report.total_in += 1;
            report.bytes_processed += v.record.text.len() as u64;
            match v.log2_ppx {
                Some(s) => {
                    report
                        .histograms
                        .entry(label_key(v.record.preset_label).to_owned())
                        .or_insert_with(|| empty_hist.clone())
                        .add(s);
                    if v.kept {
                        report.kept += 1;
                    } else {
                        report.filtered += 1;
                    }
                }
                None => {
                    report.empty_records += 1;
                    report.filtered += 1;
                }
            }
            if let Err(source) = sink(v) {
                report.finish(started);
                return Err(FilterError::Output {
                    source,
                    partial: Box::new(report),
                });
            }
        }
        if let Some(source) = input_error {
            report.finish(started);
            return Err(FilterError::Input {
                source,
                partial: Box::new(report),
            });
        }
        if last {
            break;
        }
    }
    report.finish(started);
    Ok(report)
}

/// Kept records with their scores, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Kept {
    pub record: RawRecord,
    pub log2_ppx: f64,
    pub tokens: TokenSequence,
}

/// Collecting convenience over [`filter_stream`] for in-memory input.
pub fn filter_records(
    records: Vec<RawRecord>,
    model: &NGramModel,
    tokenizer: &Tokenizer,
    cfg: &FilterConfig,
) -> Result<(Vec<Kept>, FilterReport), FilterError> {
    let mut kept = Vec::new();
    let report = filter_stream(records.into_iter().map(Ok), model, tokenizer, cfg, |v| {
        if v.kept {
            kept.push(Kept {
                record: v.record,
                log2_ppx: v.log2_ppx.expect("kept records are scored"),
                tokens: v.tokens.expect("kept records are tokenized"),
            });
        }
        Ok(())
    })?;
    Ok((kept, report))
}

/// Bytes per second per core actually in use: workers beyond the machine's
/// available parallelism do not add cores.
pub(crate) fn per_core(bytes: u64, secs: f64, workers: usize) -> f64 {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    if secs > 0.0 {
        bytes as f64 / (secs * workers.min(cores).max(1) as f64)
    } else {
        0.0
    }
}
