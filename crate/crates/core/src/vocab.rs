// SPDX-License-Identifier: Apache-2.0

use rustc_hash::FxHashMap;

use crate::codec::{ModelFormatError, Reader, Writer};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const BOS_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;

/// Bijection between token strings and dense `u32` ids.
///
/// A vocabulary built with [`Vocabulary::with_reserved`] always holds `<s>`,
/// `</s>` and `<unk>` at ids 0, 1 and 2. The topic model uses a plain
/// vocabulary without them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: FxHashMap<String, u32>,
    reserved: bool,
}

impl Vocabulary {
    pub fn with_reserved() -> Self {
        let mut v = Vocabulary {
            reserved: true,
            ..Default::default()
        };
        for t in [BOS, EOS, UNK] {
            v.intern(t);
        }
        v
    }

    pub fn plain() -> Self {
        Vocabulary::default()
    }

    pub fn has_reserved(&self) -> bool {
        self.reserved
    }

    /// Returns the id for `token`, assigning the next free id if unseen.
    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = u32::try_from(self.tokens.len()).expect("vocabulary exceeds u32 ids");
        self.tokens.push(token.to_owned());
        self.ids.insert(token.to_owned(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// Like [`id`](Self::id) but maps unknown tokens to `<unk>`.
    ///
    /// Panics on a plain vocabulary, which has no `<unk>`.
    pub fn id_or_unk(&self, token: &str) -> u32 {
        assert!(self.reserved, "id_or_unk on a vocabulary without <unk>");
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (i as u32, t.as_str()))
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.u32(u32::from(self.reserved));
        w.len_prefix(self.tokens.len());
        for t in &self.tokens {
            w.str(t);
        }
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, ModelFormatError> {
        let reserved = match r.u32("vocabulary flags")? {
            0 => false,
            1 => true,
            other => {
                return Err(ModelFormatError::Corrupt(format!(
                    "vocabulary flags {other}"
                )))
            }
        };
        let n = r.len_prefix(8, "vocabulary size")?;
        let mut v = Vocabulary {
            reserved,
            ..Default::default()
        };
        for _ in 0..n {
            let t = r.string("vocabulary entry")?;
            let before = v.len();
            v.intern(&t);
            if v.len() == before {
                return Err(ModelFormatError::Corrupt(format!(
                    "duplicate vocabulary entry {t:?}"
                )));
            }
        }
        if reserved && (v.id(BOS) != Some(BOS_ID) || v.id(EOS) != Some(EOS_ID) || v.id(UNK) != Some(UNK_ID)) {
            return Err(ModelFormatError::Corrupt(
                "reserved tokens missing from vocabulary".into(),
            ));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let mut v = Vocabulary::with_reserved();
        assert_eq!(v.id(BOS), Some(0));
        assert_eq!(v.id(EOS), Some(1));
        assert_eq!(v.id(UNK), Some(2));
        assert_eq!(v.intern("error"), 3);
        assert_eq!(v.intern("error"), 3);
        assert_eq!(v.id_or_unk("nope"), UNK_ID);
    }

    #[test]
    fn bijection() {
        let mut v = Vocabulary::plain();
        for t in ["a", "b", "a", "c", "b"] {
            v.intern(t);
        }
        assert_eq!(v.len(), 3);
        for (id, tok) in v.iter() {
            assert_eq!(v.id(tok), Some(id));
            assert_eq!(v.token(id), Some(tok));
        }
    }
}
