// SPDX-License-Identifier: Apache-2.0

//! Log line normalization.
//!
//! Variable fields (dates, clock times, IPv4 addresses, hex ids, integers) are
//! replaced by placeholder tokens so that records produced by the same logging
//! statement collapse onto the same token template. Rules run in table order
//! against the raw text; each match is cut out as an atomic placeholder and
//! later rules only see the text between earlier matches. The remaining text
//! is lowercased and split on whitespace and punctuation, keeping `.` between
//! identifier characters so class names like `java.net.SocketException` stay
//! whole.

use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records::RawRecord;

pub const TRUNC: &str = "<trunc>";
pub const DEFAULT_MAX_TOKENS: usize = 512;

#[derive(Debug, Error)]
pub enum TokenizeError {
    #[error("record {line_no} normalizes to zero tokens")]
    EmptyRecord { line_no: u64 },
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("rule {index}: invalid pattern: {source}")]
    Pattern {
        index: usize,
        #[source]
        source: regex::Error,
    },
    #[error("rule {index}: placeholder {placeholder:?} must look like <name> with name in [a-z0-9_]")]
    Placeholder { index: usize, placeholder: String },
    #[error("rules file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("rules file: {0}")]
    Io(#[from] std::io::Error),
    #[error("max_tokens must be at least 2, got {0}")]
    MaxTokens(usize),
}

/// One `pattern -> placeholder` entry of the normalization table.
#[derive(Debug, Clone)]
pub struct Rule {
    pattern: Regex,
    placeholder: String,
    min_len: usize,
}

impl Rule {
    pub fn new(pattern: &str, placeholder: &str, min_len: usize) -> Result<Self, RulesError> {
        Self::build(0, pattern, placeholder, min_len)
    }

    fn build(
        index: usize,
        pattern: &str,
        placeholder: &str,
        min_len: usize,
    ) -> Result<Self, RulesError> {
        if !is_placeholder_name(placeholder) {
            return Err(RulesError::Placeholder {
                index,
                placeholder: placeholder.to_owned(),
            });
        }
        let pattern = Regex::new(pattern).map_err(|source| RulesError::Pattern { index, source })?;
        Ok(Rule {
            pattern,
            placeholder: placeholder.to_owned(),
            min_len,
        })
    }

    pub fn placeholder(&self) -> &str {
        &self.placeholder
    }

    pub fn pattern(&self) -> &str {
        self.pattern.as_str()
    }
}

fn is_placeholder_name(s: &str) -> bool {
    s.len() > 2
        && s.starts_with('<')
        && s.ends_with('>')
        && s[1..s.len() - 1]
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

#[derive(Debug, Deserialize, Serialize)]
struct RulesFile {
    #[serde(default)]
    max_tokens: Option<usize>,
    rule: Vec<RuleEntry>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RuleEntry {
    pattern: String,
    placeholder: String,
    #[serde(default)]
    min_len: usize,
}

/// Ordered normalization table plus the record-length cap.
#[derive(Debug, Clone)]
pub struct NormalizationRules {
    rules: Vec<Rule>,
    max_tokens: usize,
}

impl Default for NormalizationRules {
    fn default() -> Self {
        let table: [(&str, &str, usize); 5] = [
            (r"\b\d{4}[-/]\d{1,2}[-/]\d{1,2}(?:T|\b)", "<date>", 0),
            (r"\b\d{1,2}:\d{2}:\d{2}(?:[.,]\d+)?(?:Z\b|\b)", "<time>", 0),
            (r"\b(?:\d{1,3}\.){3}\d{1,3}\b", "<ip>", 0),
            (
                r"\b(?:0[xX][0-9a-fA-F]+|[0-9a-fA-F]*[0-9][0-9a-fA-F]*[a-fA-F][0-9a-fA-F]*|[0-9a-fA-F]*[a-fA-F][0-9a-fA-F]*[0-9][0-9a-fA-F]*)\b",
                "<hex>",
                4,
            ),
            (r"\b\d+", "<num>", 0),
        ];
        let rules = table
            .iter()
            .enumerate()
            .map(|(i, (p, ph, min))| Rule::build(i, p, ph, *min).expect("default rule compiles"))
            .collect();
        NormalizationRules {
            rules,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl NormalizationRules {
    pub fn new(rules: Vec<Rule>, max_tokens: usize) -> Result<Self, RulesError> {
        if max_tokens < 2 {
            return Err(RulesError::MaxTokens(max_tokens));
        }
        Ok(NormalizationRules { rules, max_tokens })
    }

    /// Parses a TOML rules table:
    ///
    /// ```toml
    /// max_tokens = 512          # optional
    /// [[rule]]
    /// pattern = '\b\d+'
    /// placeholder = "<num>"
    /// min_len = 0               # optional
    /// ```
    pub fn from_toml(text: &str) -> Result<Self, RulesError> {
        let file: RulesFile = toml::from_str(text)?;
        let rules = file
            .rule
            .iter()
            .enumerate()
            .map(|(i, e)| Rule::build(i, &e.pattern, &e.placeholder, e.min_len))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(rules, file.max_tokens.unwrap_or(DEFAULT_MAX_TOKENS))
    }

    /// Inverse of [`from_toml`](Self::from_toml).
    pub fn to_toml(&self) -> String {
        let file = RulesFile {
            max_tokens: Some(self.max_tokens),
            rule: self
                .rules
                .iter()
                .map(|r| RuleEntry {
                    pattern: r.pattern.as_str().to_owned(),
                    placeholder: r.placeholder.clone(),
                    min_len: r.min_len,
                })
                .collect(),
        };
        toml::to_string(&file).expect("rules serialize")
    }

    pub fn load(path: &Path) -> Result<Self, RulesError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }
}

/// Normalized token stream of one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    /// Line number of the originating [`RawRecord`], 0 when synthetic.
    pub line_no: u64,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenSequence { tokens, line_no: 0 }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

impl AsRef<[String]> for TokenSequence {
    fn as_ref(&self) -> &[String] {
        &self.tokens
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

enum Segment<'a> {
    Text(&'a str),
    Placeholder(&'a str),
}

/// Stateless once built; share freely across threads.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    rules: NormalizationRules,
    literal: Regex,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::new(NormalizationRules::default())
    }
}

impl Tokenizer {
    pub fn new(rules: NormalizationRules) -> Self {
        let mut names: Vec<String> = rules
            .rules
            .iter()
            .map(|r| regex::escape(&r.placeholder))
            .collect();
        names.push(regex::escape(TRUNC));
        names.sort();
        names.dedup();
        let literal = Regex::new(&names.join("|")).expect("escaped alternation compiles");
        Tokenizer { rules, literal }
    }

    pub fn rules(&self) -> &NormalizationRules {
        &self.rules
    }

    pub fn tokenize(&self, record: &RawRecord) -> Result<TokenSequence, TokenizeError> {
        let tokens = self.tokenize_text(&record.text);
        if tokens.is_empty() {
            return Err(TokenizeError::EmptyRecord {
                line_no: record.line_no,
            });
        }
        Ok(TokenSequence {
            tokens,
            line_no: record.line_no,
        })
    }

    /// Normalizes `text`; may return an empty vector.
    pub fn tokenize_text(&self, text: &str) -> Vec<String> {
        // Placeholder literals already present (e.g. re-tokenizing our own
        // output) stay atomic.
        let mut segments = split_matches(vec![Segment::Text(text)], &self.literal, 0, None);
        for rule in &self.rules.rules {
            segments = split_matches(segments, &rule.pattern, rule.min_len, Some(&rule.placeholder));
        }

        let cap = self.rules.max_tokens;
        let mut out: Vec<String> = Vec::new();
        for seg in segments {
            if out.len() > cap {
                break;
            }
            match seg {
                Segment::Placeholder(p) => out.push(p.to_owned()),
                Segment::Text(t) => split_words(&t.to_lowercase(), &mut out),
            }
        }
        if out.len() > cap {
            out.truncate(cap - 1);
            out.push(TRUNC.to_owned());
        }
        out
    }
}

/// Cuts every match of `re` out of the text segments. `placeholder` of `None`
/// keeps the matched text itself as the placeholder token.
fn split_matches<'a>(
    segments: Vec<Segment<'a>>,
    re: &Regex,
    min_len: usize,
    placeholder: Option<&'a str>,
) -> Vec<Segment<'a>> {
    let mut out = Vec::with_capacity(segments.len());
    for seg in segments {
        let text = match seg {
            Segment::Text(t) => t,
            other => {
                out.push(other);
                continue;
            }
        };
        let mut last = 0;
        for m in re.find_iter(text) {
            if m.as_str().chars().count() < min_len {
                continue;
            }
            if m.start() > last {
                out.push(Segment::Text(&text[last..m.start()]));
            }
            out.push(Segment::Placeholder(placeholder.unwrap_or(m.as_str())));
            last = m.end();
        }
        if last < text.len() {
            out.push(Segment::Text(&text[last..]));
        }
    }
    out
}

/// Word runs, joined across single dots. Uses the regex engine's own notion
/// of a word character so splitting agrees with the rules' `\b`.
static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+(?:\.\w+)*").expect("word pattern"));

/// Splits already-lowercased text into word tokens. A `.` survives only when
/// both neighbours are word characters.
fn split_words(text: &str, out: &mut Vec<String>) {
    out.extend(WORD.find_iter(text).map(|m| m.as_str().to_owned()));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        Tokenizer::default().tokenize_text(s)
    }

    #[test]
    fn plain_words_lowercased() {
        assert_eq!(toks("Connection Timeout Exception"), ["connection", "timeout", "exception"]);
    }

    #[test]
    fn default_table_by_hand() {
        // date, then time, then the bare integer
        assert_eq!(
            toks("user 48213 failed at 2017-03-04 11:22:33"),
            ["user", "<num>", "failed", "at", "<date>", "<time>"]
        );
    }

    #[test]
    fn whitespace_only_is_empty_record() {
        let rec = RawRecord::new(7, "   ");
        assert!(matches!(
            Tokenizer::default().tokenize(&rec),
            Err(TokenizeError::EmptyRecord { line_no: 7 })
        ));
    }

    #[test]
    fn class_names_keep_dots() {
        assert_eq!(
            toks("Caused by: java.net.SocketException: Connection reset."),
            ["caused", "by", "java.net.socketexception", "connection", "reset"]
        );
    }

    #[test]
    fn placeholders() {
        assert_eq!(toks("from 10.0.12.7:8080"), ["from", "<ip>", "<num>"]);
        assert_eq!(toks("2017-03-04T11:22:33.120Z"), ["<date>", "<time>"]);
        assert_eq!(toks("ptr 0x7ffe1a addr DEADBEEF01 sess b932e095"), ["ptr", "<hex>", "addr", "<hex>", "sess", "<hex>"]);
        // pure letters are words, and short hex-ish tokens are left alone
        assert_eq!(toks("cafe face e5 a1"), ["cafe", "face", "e5", "a1"]);
        assert_eq!(toks("took 48213ms"), ["took", "<num>", "ms"]);
    }

    #[test]
    fn truncation_sentinel() {
        let long = vec!["w"; 600].join(" ");
        let t = toks(&long);
        assert_eq!(t.len(), DEFAULT_MAX_TOKENS);
        assert_eq!(t.last().unwrap(), TRUNC);
        assert_eq!(toks(&t.join(" ")), t);
    }

    #[test]
    fn own_output_is_stable() {
        let t = toks("id=<num> x<hex>y at 12:00:01");
        assert_eq!(t, ["id", "<num>", "x", "<hex>", "y", "at", "<time>"]);
        assert_eq!(toks(&t.join(" ")), t);
    }

    #[test]
    fn rules_toml_round_trip() {
        let text = NormalizationRules::default().to_toml();
        let back = Tokenizer::new(NormalizationRules::from_toml(&text).unwrap());
        let line = "user 48213 failed at 2017-03-04 11:22:33 from 10.1.2.3 sess 0xdeadbeef";
        assert_eq!(back.tokenize_text(line), toks(line));
    }

    #[test]
    fn rules_from_toml() {
        let rules = NormalizationRules::from_toml(
            r#"
            max_tokens = 4
            [[rule]]
            pattern = 'ORD-\d+'
            placeholder = "<order>"
            "#,
        )
        .unwrap();
        let tk = Tokenizer::new(rules);
        assert_eq!(tk.tokenize_text("Order ORD-991 shipped 5"), ["order", "<order>", "shipped", "5"]);
        assert_eq!(tk.tokenize_text("a b c d e"), ["a", "b", "c", TRUNC]);

        assert!(matches!(
            NormalizationRules::from_toml("[[rule]]\npattern = '('\nplaceholder = \"<x>\""),
            Err(RulesError::Pattern { .. })
        ));
        assert!(matches!(
            NormalizationRules::from_toml("[[rule]]\npattern = 'x'\nplaceholder = \"X\""),
            Err(RulesError::Placeholder { .. })
        ));
    }
}
