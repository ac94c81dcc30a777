// SPDX-License-Identifier: Apache-2.0

//! Little-endian binary helpers shared by the model file formats.
//!
//! Every model file starts with a 4-byte magic tag followed by a `u32` format
//! version. Readers reject truncated input, unknown versions and trailing
//! garbage with [`ModelFormatError`].

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelFormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported {format} version {found} (this build reads version {supported})")]
    Version {
        format: &'static str,
        found: u32,
        supported: u32,
    },
    #[error("unexpected end of data while reading {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after model data")]
    TrailingBytes(usize),
    #[error("corrupt model data: {0}")]
    Corrupt(String),
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u32(version);
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn len_prefix(&mut self, n: usize) {
        self.u64(n as u64);
    }

    pub fn f64_slice(&mut self, vs: &[f64]) {
        self.len_prefix(vs.len());
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.len_prefix(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version, leaving the cursor just past the header.
    pub fn open(
        data: &'a [u8],
        magic: &[u8; 4],
        format: &'static str,
        version: u32,
    ) -> Result<Self, ModelFormatError> {
        let mut r = Reader { data, pos: 0 };
        let found = r.take(4, "magic")?;
        if found != magic {
            return Err(ModelFormatError::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let found = r.u32("version")?;
        if found != version {
            return Err(ModelFormatError::Version {
                format,
                found,
                supported: version,
            });
        }
        Ok(r)
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ModelFormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or(ModelFormatError::Truncated(what))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, ModelFormatError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64, ModelFormatError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self, what: &'static str) -> Result<f64, ModelFormatError> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    /// Reads a length prefix, rejecting lengths that cannot fit in the rest of
    /// the buffer given `min_item_size` bytes per item.
    pub fn len_prefix(
        &mut self,
        min_item_size: usize,
        what: &'static str,
    ) -> Result<usize, ModelFormatError> {
        let n = self.u64(what)?;
        let remaining = (self.data.len() - self.pos) as u64;
        if n.saturating_mul(min_item_size as u64) > remaining {
            return Err(ModelFormatError::Truncated(what));
        }
        Ok(n as usize)
    }

    pub fn f64_vec(&mut self, what: &'static str) -> Result<Vec<f64>, ModelFormatError> {
        let n = self.len_prefix(8, what)?;
        (0..n).map(|_| self.f64(what)).collect()
    }

    pub fn string(&mut self, what: &'static str) -> Result<String, ModelFormatError> {
        let n = self.len_prefix(1, what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| ModelFormatError::Corrupt(format!("{what}: invalid utf-8")))
    }

    pub fn finish(self) -> Result<(), ModelFormatError> {
        match self.data.len() - self.pos {
            0 => Ok(()),
            n => Err(ModelFormatError::TrailingBytes(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_checks() {
        let mut w = Writer::new(b"TEST", 3);
        w.f64(1.5);
        w.str("héllo");
        let bytes = w.finish();

        let mut r = Reader::open(&bytes, b"TEST", "test", 3).unwrap();
        assert_eq!(r.f64("x").unwrap(), 1.5);
        assert_eq!(r.string("s").unwrap(), "héllo");
        r.finish().unwrap();

        assert!(matches!(
            Reader::open(&bytes, b"NOPE", "test", 3),
            Err(ModelFormatError::BadMagic { .. })
        ));
        assert_eq!(
            Reader::open(&bytes, b"TEST", "test", 4).unwrap_err(),
            ModelFormatError::Version {
                format: "test",
                found: 3,
                supported: 4
            }
        );
        assert!(matches!(
            Reader::open(&bytes[..2], b"TEST", "test", 3),
            Err(ModelFormatError::Truncated(_))
        ));
    }

    #[test]
    fn absurd_length_prefix_is_truncation() {
        let mut w = Writer::new(b"TEST", 1);
        w.u64(u64::MAX);
        let bytes = w.finish();
        let mut r = Reader::open(&bytes, b"TEST", "test", 1).unwrap();
        assert!(matches!(
            r.f64_vec("v"),
            Err(ModelFormatError::Truncated("v"))
        ));
    }
}
