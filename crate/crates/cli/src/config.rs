// SPDX-License-Identifier: Apache-2.0

//! Optional TOML settings file. Command-line flags override it.
//!
//! ```toml
//! seed = 7
//! workers = 4
//! threshold = 11.0
//! rules = "rules.toml"     # relative to this file
//!
//! [lm]
//! order = 3
//! weights = [0.8, 0.15, 0.05]
//!
//! [lda]
//! topics = 100
//! sweeps = 200
//! infer_sweeps = 50
//!
//! [mlp]
//! hidden = [64, 64, 64]
//! lr = 0.01
//! epochs = 50
//! batch_size = 32
//! class_weighting = false
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use logsieve_core::tokenizer::NormalizationRules;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub threshold: Option<f64>,
    pub rules: Option<PathBuf>,
    #[serde(default)]
    pub lm: LmSection,
    #[serde(default)]
    pub lda: LdaSection,
    #[serde(default)]
    pub mlp: MlpSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmSection {
    pub order: Option<usize>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdaSection {
    pub topics: Option<usize>,
    pub sweeps: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub infer_sweeps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSection {
    pub hidden: Option<Vec<usize>>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub class_weighting: Option<bool>,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let (Some(rules), Some(dir)) = (&cfg.rules, path.parent()) {
            if rules.is_relative() {
                cfg.rules = Some(dir.join(rules));
            }
        }
        Ok(cfg)
    }

    pub fn normalization_rules(&self) -> anyhow::Result<NormalizationRules> {
        match &self.rules {
            Some(p) => NormalizationRules::load(p).with_context(|| format!("loading rules {}", p.display())),
            None => Ok(NormalizationRules::default()),
        }
    }
}
