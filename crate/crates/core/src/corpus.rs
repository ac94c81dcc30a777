// SPDX-License-Identifier: Apache-2.0

//! Labeled datasets and the synthetic log generator.
//!
//! Generated records look like
//! `2017-03-04 11:22:33,120 WARN [billing] Login failed for user kalo17: ...`.
//! The level word follows the (noisy) preset label, while the ground-truth
//! class is the pool the template was drawn from.

use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::{parse_json_line, parse_label, read_records, RecordError, RecordFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LogClass {
    #[serde(rename = "normal")]
    Information,
    #[serde(rename = "operation")]
    OperationError,
    #[serde(rename = "system")]
    SystemError,
}

impl LogClass {
    pub const ALL: [LogClass; 3] = [
        LogClass::Information,
        LogClass::OperationError,
        LogClass::SystemError,
    ];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Label string used in JSON lines files.
    pub fn label(self) -> &'static str {
        match self {
            LogClass::Information => "normal",
            LogClass::OperationError => "operation",
            LogClass::SystemError => "system",
        }
    }
}

impl fmt::Display for LogClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LogClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "information" | "info" => Ok(LogClass::Information),
            "operation" | "operation_error" => Ok(LogClass::OperationError),
            "system" | "system_error" => Ok(LogClass::SystemError),
            _ => Err(format!(
                "unknown label {s:?} (expected normal, operation or system)"
            )),
        }
    }
}

/// A record with its ground-truth class and, optionally, the label the
/// target system attached to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub text: String,
    pub label: LogClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset_label: Option<LogClass>,
}

impl LabeledRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("labeled record serializes")
    }
}

/// Reads `{"text", "label", "preset_label"?}` lines; `label` is required.
pub fn read_labeled<R: BufRead>(
    reader: R,
) -> impl Iterator<Item = Result<(u64, LabeledRecord), RecordError>> {
    let mut lines = read_records(reader, RecordFormat::Jsonl);
    std::iter::from_fn(move || {
        let (line_no, line) = match lines.next_line()? {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        Some(parse_json_line(line_no, &line).and_then(|j| {
            let label = match j.label.as_deref() {
                Some(s) => parse_label(line_no, s)?,
                None => {
                    return Err(RecordError::Parse {
                        line_no,
                        message: "missing \"label\" field".into(),
                    })
                }
            };
            let preset_label = match j.preset_label.as_deref() {
                Some(s) => Some(parse_label(line_no, s)?),
                None => None,
            };
            Ok((
                line_no,
                LabeledRecord {
                    text: j.text.unwrap_or_default(),
                    label,
                    preset_label,
                },
            ))
        }))
    })
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("template pool for class {0} is empty")]
    EmptyPool(LogClass),
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error("cannot split a corpus of {0} records (need at least 2)")]
    Split(usize),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("template pool file: {0}")]
    Io(#[from] std::io::Error),
}

/// One template per line; blank lines and `#` comments are ignored.
/// Placeholders are written in angle brackets, e.g. `<num>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplatePools {
    pub information: Vec<String>,
    pub operation: Vec<String>,
    pub system: Vec<String>,
}

fn parse_pool(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

impl Default for TemplatePools {
    fn default() -> Self {
        TemplatePools {
            information: parse_pool(include_str!("../assets/templates/information.txt")),
            operation: parse_pool(include_str!("../assets/templates/operation.txt")),
            system: parse_pool(include_str!("../assets/templates/system.txt")),
        }
    }
}

impl TemplatePools {
    /// Loads `information.txt`, `operation.txt` and `system.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let read = |name: &str| -> Result<Vec<String>, CorpusError> {
            Ok(parse_pool(&std::fs::read_to_string(dir.join(name))?))
        };
        Ok(TemplatePools {
            information: read("information.txt")?,
            operation: read("operation.txt")?,
            system: read("system.txt")?,
        })
    }

    pub fn pool(&self, class: LogClass) -> &[String] {
        match class {
            LogClass::Information => &self.information,
            LogClass::OperationError => &self.operation,
            LogClass::SystemError => &self.system,
        }
    }
}

/// Parameters of the synthetic corpus.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub pools: TemplatePools,
    /// Class proportions in [`LogClass`] index order.
    pub mix: [f64; 3],
    /// Probability that a record's preset label is wrong.
    pub label_noise: f64,
    /// Probability that a record gets a burst of rare wording injected.
    pub rare_rate: f64,
    /// Inclusive range of stack frames appended to system errors.
    pub trace_frames: (usize, usize),
    pub seed: u64,
}

/// Label distribution of the reference deployment: 70.8 / 27.8 / 1.4 percent.
pub const DEFAULT_MIX: [f64; 3] = [0.708, 0.278, 0.014];

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            pools: TemplatePools::default(),
            mix: DEFAULT_MIX,
            label_noise: 0.1,
            rare_rate: 0.05,
            trace_frames: (3, 12),
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.mix.iter().any(|&p| !(0.0..=1.0).contains(&p))
            || (self.mix.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(CorpusError::Spec(format!(
                "class mix {:?} must be probabilities summing to 1",
                self.mix
            )));
        }
        for (name, r) in [("label_noise", self.label_noise), ("rare_rate", self.rare_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(CorpusError::Spec(format!("{name} {r} outside [0, 1]")));
            }
        }
        if self.trace_frames.0 > self.trace_frames.1 {
            return Err(CorpusError::Spec("trace_frames min exceeds max".into()));
        }
        for class in LogClass::ALL {
            if self.mix[class.index()] > 0.0 && self.pools.pool(class).is_empty() {
                return Err(CorpusError::EmptyPool(class));
            }
        }
        Ok(())
    }
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "zu", "ren", "tor", "vas", "pel", "qui", "gan", "sho", "yet", "bri", "dax",
    "wen", "fol", "jun", "hap", "nor", "sil", "tev", "mur", "ox", "ily",
];
const SERVICES: [&str; 8] = [
    "billing", "crm", "orders", "gateway", "auth", "inventory", "notify", "reporting",
];
const HOSTS: [&str; 6] = [
    "scrm-app-01", "scrm-app-02", "scrm-app-03", "scrm-web-01", "scrm-web-02", "scrm-db-01",
];
const QUEUES: [&str; 5] = ["order-events", "billing-events", "sms-out", "audit-log", "crm-sync"];
const TABLES: [&str; 6] = [
    "subscriber", "orders", "invoice", "payment", "audit_trail", "tariff",
];
const FIELDS: [&str; 10] = [
    "msisdn", "email", "birth_date", "id_card", "postal_code", "plan_code", "imsi", "iban",
    "contact_name", "start_date",
];
const EXCEPTIONS: [&str; 10] = [
    "java.lang.NullPointerException",
    "java.lang.IllegalStateException",
    "java.sql.SQLException",
    "java.net.SocketException",
    "java.lang.OutOfMemoryError",
    "javax.transaction.SystemException",
    "com.fasterxml.jackson.core.JsonParseException",
    "org.apache.zookeeper.KeeperException",
    "java.io.IOException",
    "java.security.GeneralSecurityException",
];

/// Seeded, deterministic record stream. [`generate`] collects it.
#[derive(Debug)]
pub struct Generator {
    spec: SyntheticSpec,
    rng: ChaCha8Rng,
    lexicon: Vec<String>,
}

impl Generator {
    pub fn new(spec: SyntheticSpec) -> Result<Self, CorpusError> {
        spec.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Ok(Generator {
            spec,
            rng,
            lexicon: lexicon(),
        })
    }

    pub fn next_record(&mut self) -> LabeledRecord {
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut class = LogClass::SystemError;
        for c in LogClass::ALL {
            acc += self.spec.mix[c.index()];
            if u < acc && self.spec.mix[c.index()] > 0.0 {
                class = c;
                break;
            }
        }
        if self.spec.mix[class.index()] == 0.0 {
            // u landed in the rounding slack past the last non-zero class
            class = *LogClass::ALL
                .iter()
                .rev()
                .find(|c| self.spec.mix[c.index()] > 0.0)
                .expect("validated mix has mass");
        }

        let preset = if self.rng.random_bool(self.spec.label_noise) {
            let others: Vec<LogClass> = LogClass::ALL.into_iter().filter(|&c| c != class).collect();
            *others.choose(&mut self.rng).expect("two other classes")
        } else {
            class
        };

        let template = self
            .spec
            .pools
            .pool(class)
            .choose(&mut self.rng)
            .expect("validated pool")
            .clone();
        let mut body = self.fill(&template);
        if self.rng.random_bool(self.spec.rare_rate) {
            let n = self.rng.random_range(3..=6);
            let words: Vec<String> = (0..n).map(|_| self.word()).collect();
            let at = body.find(' ').unwrap_or(body.len());
            body.insert_str(at, &format!(" {}", words.join(" ")));
        }
        if class == LogClass::SystemError {
            let (lo, hi) = self.spec.trace_frames;
            let frames = self.rng.random_range(lo..=hi);
            for _ in 0..frames {
                let frame = self.frame();
                body.push_str(" at ");
                body.push_str(&frame);
            }
        }

        let level = match preset {
            LogClass::Information => "INFO",
            LogClass::OperationError => "WARN",
            LogClass::SystemError => "ERROR",
        };
        let ts = self.timestamp();
        let svc = *SERVICES.choose(&mut self.rng).expect("non-empty");
        LabeledRecord {
            text: format!("{ts} {level} [{svc}] {body}"),
            label: class,
            preset_label: Some(preset),
        }
    }

    fn word(&mut self) -> String {
        let i = self.rng.random_range(0..self.lexicon.len());
        self.lexicon[i].clone()
    }

    fn timestamp(&mut self) -> String {
        let r = &mut self.rng;
        format!(
            "2017-03-{:02} {:02}:{:02}:{:02},{:03}",
            r.random_range(4..=5),
            r.random_range(0..24),
            r.random_range(0..60),
            r.random_range(0..60),
            r.random_range(0..1000)
        )
    }

    fn hex(&mut self) -> String {
        loop {
            let len = self.rng.random_range(8..=16);
            let s: String = (0..len)
                .map(|_| char::from_digit(self.rng.random_range(0..16), 16).expect("hex digit"))
                .collect();
            if s.bytes().any(|b| b.is_ascii_digit()) && s.bytes().any(|b| b.is_ascii_alphabetic()) {
                return s;
            }
        }
    }

    fn frame(&mut self) -> String {
        let pkg = format!("{}.{}", self.word(), self.word());
        let class = capitalize(&format!("{}{}", self.word(), self.word()));
        let method = self.word();
        let line = self.rng.random_range(20..2000);
        format!("com.scrm.{pkg}.{class}.{method}({class}.java:{line})")
    }

    fn fill(&mut self, template: &str) -> String {
        let mut out = String::with_capacity(template.len() + 32);
        let mut rest = template;
        while let Some(start) = rest.find('<') {
            out.push_str(&rest[..start]);
            let Some(len) = rest[start..].find('>') else {
                out.push_str(&rest[start..]);
                return out;
            };
            let name = &rest[start + 1..start + len];
            let value = self.placeholder(name);
            match value {
                Some(v) => out.push_str(&v),
                None => out.push_str(&rest[start..=start + len]),
            }
            rest = &rest[start + len + 1..];
        }
        out.push_str(rest);
        out
    }

    fn placeholder(&mut self, name: &str) -> Option<String> {
        Some(match name {
            "num" => self.rng.random_range(0..100_000u32).to_string(),
            "small" => self.rng.random_range(0..100u32).to_string(),
            "port" => self.rng.random_range(1024..65536u32).to_string(),
            "ms" => format!("{}ms", self.rng.random_range(1..5000u32)),
            "ip" => {
                let r = &mut self.rng;
                format!(
                    "10.{}.{}.{}",
                    r.random_range(0..256),
                    r.random_range(0..256),
                    r.random_range(1..255)
                )
            }
            "hex" => self.hex(),
            "date" => format!("2016-{:02}-{:02}", self.rng.random_range(1..=12), self.rng.random_range(1..=28)),
            "svc" => SERVICES.choose(&mut self.rng)?.to_string(),
            "host" => HOSTS.choose(&mut self.rng)?.to_string(),
            "queue" => QUEUES.choose(&mut self.rng)?.to_string(),
            "table" => TABLES.choose(&mut self.rng)?.to_string(),
            "field" => FIELDS.choose(&mut self.rng)?.to_string(),
            "exc" => EXCEPTIONS.choose(&mut self.rng)?.to_string(),
            "word" => self.word(),
            "user" => {
                let w = self.word();
                format!("{w}{}", self.rng.random_range(1..100))
            }
            "code" => {
                let w = self.word().to_ascii_uppercase();
                format!("{w}-{}", self.hex().to_ascii_uppercase())
            }
            _ => return None,
        })
    }
}

impl Iterator for Generator {
    type Item = LabeledRecord;

    fn next(&mut self) -> Option<LabeledRecord> {
        Some(self.next_record())
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Fixed pseudo-word lexicon (independent of the generation seed).
fn lexicon() -> Vec<String> {
    let mut words = Vec::with_capacity(SYLLABLES.len().pow(3));
    for a in SYLLABLES {
        for b in SYLLABLES {
            words.push(format!("{a}{b}"));
            for c in SYLLABLES {
                words.push(format!("{a}{b}{c}"));
            }
        }
    }
    words.sort();
    words.dedup();
    words
}

pub fn generate(spec: &SyntheticSpec, n_records: usize) -> Result<Vec<LabeledRecord>, CorpusError> {
    if n_records == 0 {
        return Err(CorpusError::Spec("n_records must be at least 1".into()));
    }
    Ok(Generator::new(spec.clone())?.take(n_records).collect())
}

/// Seeded shuffle, then the first `floor(N * train_fraction)` records train.
pub fn split<T>(
    mut corpus: Vec<T>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), CorpusError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::Fraction(train_fraction));
    }
    if corpus.len() < 2 {
        return Err(CorpusError::Split(corpus.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    corpus.shuffle(&mut rng);
    let n_train = (corpus.len() as f64 * train_fraction).floor() as usize;
    let test = corpus.split_off(n_train);
    Ok((corpus, test))
}
