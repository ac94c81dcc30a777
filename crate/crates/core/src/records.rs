// SPDX-License-Identifier: Apache-2.0

//! Record readers: one log record per line, either raw text or JSON lines.

use std::io::BufRead;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::corpus::LogClass;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    /// 1-based physical line number in the source stream.
    pub line_no: u64,
    pub text: String,
    /// Label emitted by the target system. Carried for reporting only; it is
    /// never trusted as ground truth.
    pub preset_label: Option<LogClass>,
}

impl RawRecord {
    pub fn new(line_no: u64, text: impl Into<String>) -> Self {
        RawRecord {
            line_no,
            text: text.into(),
            preset_label: None,
        }
    }

    pub fn with_label(mut self, label: LogClass) -> Self {
        self.preset_label = Some(label);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecordFormat {
    #[default]
    Lines,
    Jsonl,
}

impl FromStr for RecordFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lines" => Ok(RecordFormat::Lines),
            "jsonl" => Ok(RecordFormat::Jsonl),
            other => Err(format!("unknown record format {other:?} (expected lines or jsonl)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line_no}: {message}")]
    Parse { line_no: u64, message: String },
    #[error("read error after line {line_no}: {source}")]
    Io {
        line_no: u64,
        #[source]
        source: std::io::Error,
    },
}

impl RecordError {
    pub fn is_io(&self) -> bool {
        matches!(self, RecordError::Io { .. })
    }
}

#[derive(Debug, Deserialize)]
pub(crate) struct JsonRecord {
    pub text: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub preset_label: Option<String>,
}

pub(crate) fn parse_label(line_no: u64, s: &str) -> Result<LogClass, RecordError> {
    s.parse().map_err(|e| RecordError::Parse {
        line_no,
        message: e,
    })
}

/// Parses one JSON line into its text and the raw `label` / `preset_label`
/// strings.
pub(crate) fn parse_json_line(line_no: u64, line: &str) -> Result<JsonRecord, RecordError> {
    let rec: JsonRecord = serde_json::from_str(line).map_err(|e| RecordError::Parse {
        line_no,
        message: format!("invalid json: {e}"),
    })?;
    match rec.text.as_deref() {
        None => Err(RecordError::Parse {
            line_no,
            message: "missing \"text\" field".into(),
        }),
        Some("") => Err(RecordError::Parse {
            line_no,
            message: "empty \"text\" field".into(),
        }),
        Some(_) => Ok(rec),
    }
}

/// Streaming line reader yielding one item per non-blank line.
#[derive(Debug)]
pub struct RecordReader<R> {
    inner: R,
    format: RecordFormat,
    line_no: u64,
    buf: Vec<u8>,
    failed: bool,
}

pub fn read_records<R: BufRead>(reader: R, format: RecordFormat) -> RecordReader<R> {
    RecordReader {
        inner: reader,
        format,
        line_no: 0,
        buf: Vec::new(),
        failed: false,
    }
}

impl<R: BufRead> RecordReader<R> {
    /// Next non-blank line as lossy UTF-8, or `None` at EOF.
    pub(crate) fn next_line(&mut self) -> Option<Result<(u64, String), RecordError>> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            match self.inner.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {
                    self.line_no += 1;
                    let mut end = self.buf.len();
                    while end > 0 && matches!(self.buf[end - 1], b'\n' | b'\r') {
                        end -= 1;
                    }
                    if end == 0 {
                        continue;
                    }
                    let text = String::from_utf8_lossy(&self.buf[..end]).into_owned();
                    return Some(Ok((self.line_no, text)));
                }
                Err(source) => {
                    self.failed = true;
                    return Some(Err(RecordError::Io {
                        line_no: self.line_no,
                        source,
                    }));
                }
            }
        }
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<RawRecord, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line_no, text) = match self.next_line()? {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        Some(match self.format {
            RecordFormat::Lines => Ok(RawRecord::new(line_no, text)),
            RecordFormat::Jsonl => parse_json_line(line_no, &text).and_then(|j| {
                // Labeled corpora carry both the true label and the noisy
                // preset one; a raw record only ever sees the preset label.
                let preset = match j.preset_label.as_deref().or(j.label.as_deref()) {
                    Some(s) => Some(parse_label(line_no, s)?),
                    None => None,
                };
                Ok(RawRecord {
                    line_no,
                    text: j.text.unwrap_or_default(),
                    preset_label: preset,
                })
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(input: &str, format: RecordFormat) -> Vec<Result<RawRecord, RecordError>> {
        read_records(input.as_bytes(), format).collect()
    }

    #[test]
    fn lines_numbered_from_one() {
        let recs: Vec<_> = collect("first line\nsecond line\n", RecordFormat::Lines)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(recs, [RawRecord::new(1, "first line"), RawRecord::new(2, "second line")]);
    }

    #[test]
    fn blank_lines_skipped_but_counted() {
        let recs: Vec<_> = collect("a\n\r\n\nb", RecordFormat::Lines)
            .into_iter()
            .map(|r| r.unwrap().line_no)
            .collect();
        assert_eq!(recs, [1, 4]);
    }

    #[test]
    fn invalid_utf8_is_replaced() {
        let recs: Vec<_> = read_records(&b"ok \xff\xfe end\n"[..], RecordFormat::Lines).collect();
        assert_eq!(recs[0].as_ref().unwrap().text, "ok \u{fffd}\u{fffd} end");
    }

    #[test]
    fn jsonl_fields() {
        let recs = collect(r#"{"text":"x y","label":"system"}"#, RecordFormat::Jsonl);
        assert_eq!(
            recs[0].as_ref().unwrap(),
            &RawRecord::new(1, "x y").with_label(LogClass::SystemError)
        );

        // preset_label wins over the true label
        let recs = collect(
            r#"{"text":"x","label":"system","preset_label":"normal"}"#,
            RecordFormat::Jsonl,
        );
        assert_eq!(recs[0].as_ref().unwrap().preset_label, Some(LogClass::Information));
    }

    #[test]
    fn jsonl_errors_carry_line_numbers() {
        let recs = collect(
            "{\"text\":\"ok\"}\n{\"label\":\"system\"}\nnot json\n{\"text\":\"x\",\"label\":\"bogus\"}\n",
            RecordFormat::Jsonl,
        );
        assert!(recs[0].is_ok());
        for (i, want) in [(1, 2), (2, 3), (3, 4)] {
            match &recs[i] {
                Err(RecordError::Parse { line_no, .. }) => assert_eq!(*line_no, want),
                other => panic!("expected parse error, got {other:?}"),
            }
        }
    }
}
