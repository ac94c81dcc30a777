// SPDX-License-Identifier: Apache-2.0

//! Two-stage system-log triage.
//!
//! Stage one scores every record with a count-based n-gram language model and
//! drops records whose base-2 log-perplexity falls below a threshold: common,
//! well-understood messages are cheap to recognize and rarely interesting.
//! Stage two maps the survivors into an LDA topic space and classifies them
//! with a small ReLU/softmax perceptron into one of three operational classes.
//!
//! ```text
//! RawRecord -> tokenize -> NGramModel::score -> (filtered | LdaModel::infer -> Mlp::forward -> LogClass)
//! ```

#![warn(missing_debug_implementations, rust_2018_idioms)]

pub mod codec;
pub mod corpus;
pub mod filter;
pub mod lda;
pub mod metrics;
pub mod mlp;
pub mod ngram;
pub mod pipeline;
pub mod records;
pub mod tokenizer;
pub mod vocab;

pub use codec::ModelFormatError;
pub use corpus::{LabeledRecord, LogClass, SyntheticSpec};
pub use filter::{FilterConfig, FilterReport};
pub use lda::{LdaConfig, LdaModel, TopicVector};
pub use metrics::{ConfusionMatrix, EvalMetrics};
pub use mlp::{Mlp, TrainConfig};
pub use ngram::{NGramModel, ScoredRecord};
pub use pipeline::{EvalReport, PipelineBundle, PipelineConfig, Prediction};
pub use records::{RawRecord, RecordFormat};
pub use tokenizer::{TokenSequence, Tokenizer};
pub use vocab::Vocabulary;
