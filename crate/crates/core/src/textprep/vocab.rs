use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const OOV_ID: u32 = 1;
const RESERVED: usize = 2;
const FILE_VERSION: u32 = 1;

/// Token → id mapping. Ids 0 and 1 are the padding and out-of-vocabulary
/// ids; learned tokens occupy the dense range `2..len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    max_size: usize,
}

/// On-disk form: token ids are implicit by position, reserved ids excluded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularyFile {
    pub version: u32,
    pub max_len: usize,
    pub tokens: Vec<String>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, max_size: usize) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Format(format!("vocabulary token {tok:?} is empty or contains whitespace")));
            }
            if index.insert(tok.clone(), (i + RESERVED) as u32).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Vocabulary { tokens, index, max_size })
    }

    /// Number of ids, reserved ones included.
    pub fn len(&self) -> usize {
        self.tokens.len() + RESERVED
    }

    /// True when only the reserved ids exist.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(OOV_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        match id {
            PAD_ID => Some("<pad>"),
            OOV_ID => Some("<oov>"),
            _ => self.tokens.get(id as usize - RESERVED).map(String::as_str),
        }
    }

    /// Learned tokens in id order, starting at id 2.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn to_file(&self, max_len: usize) -> VocabularyFile {
        VocabularyFile { version: FILE_VERSION, max_len, tokens: self.tokens.clone() }
    }

    pub fn from_file(file: VocabularyFile) -> Result<(Self, usize)> {
        if file.version != FILE_VERSION {
            return Err(Error::VersionMismatch(format!(
                "vocabulary file version {} (expected {FILE_VERSION})",
                file.version
            )));
        }
        if file.max_len == 0 {
            return Err(Error::Format("vocabulary max_len must be at least 1".into()));
        }
        let size = file.tokens.len() + RESERVED;
        Ok((Self::from_tokens(file.tokens, size)?, file.max_len))
    }

    pub fn save(&self, path: impl AsRef<Path>, max_len: usize) -> Result<()> {
        let json = serde_json::to_vec_pretty(&self.to_file(max_len)).expect("vocabulary serializes");
        fs::write(path, json)?;
        Ok(())
    }

    /// Load a vocabulary file, returning the vocabulary and its sequence length.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, usize)> {
        let bytes = fs::read(path)?;
        let file: VocabularyFile =
            serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("vocabulary file: {e}")))?;
        Self::from_file(file)
    }
}

/// Rank whitespace tokens by descending frequency, breaking ties
/// lexicographically, and keep the top `max_size - 2`.
pub fn build_vocabulary<I, S>(corpus: I, max_size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if max_size < RESERVED + 1 {
        return Err(Error::invalid(format!("vocabulary max_size must be at least 3, got {max_size}")));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for text in corpus {
        for tok in text.as_ref().split_whitespace() {
            *counts.entry(tok.to_string()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
    ranked.truncate(max_size - RESERVED);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t).collect(), max_size)
}

/// Fixed-length id sequence. Positions at or beyond `true_len` hold [`PAD_ID`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub true_len: usize,
}

impl TokenSeq {
    /// The non-padding prefix.
    pub fn tokens(&self) -> &[u32] {
        &self.ids[..self.true_len]
    }
}

/// Map cleaned text to ids: unknown tokens become [`OOV_ID`], the head is
/// kept when truncating, and the tail is padded.
pub fn vectorize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSeq {
    let mut ids: Vec<u32> = text.split_whitespace().take(max_len).map(|t| vocab.id(t)).collect();
    let true_len = ids.len();
    ids.resize(max_len, PAD_ID);
    TokenSeq { ids, true_len }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> Vocabulary {
        build_vocabulary(["a b b", "b c"], 4).unwrap()
    }

    #[test]
    fn ranks_by_frequency_then_lexicographic() {
        let v = small();
        assert_eq!(v.id("b"), 2);
        assert_eq!(v.id("a"), 3);
        assert_eq!(v.id("c"), OOV_ID);
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn empty_corpus_has_only_reserved_ids() {
        let v = build_vocabulary(Vec::<String>::new(), 10).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.is_empty());
    }

    #[test]
    fn rejects_tiny_max_size() {
        assert!(build_vocabulary(["a"], 2).is_err());
    }

    #[test]
    fn vectorize_examples() {
        let v = small();
        assert_eq!(vectorize("b a", &v, 4), TokenSeq { ids: vec![2, 3, 0, 0], true_len: 2 });
        assert_eq!(vectorize("", &v, 4), TokenSeq { ids: vec![0; 4], true_len: 0 });
        assert_eq!(vectorize("zzz", &v, 4), TokenSeq { ids: vec![1, 0, 0, 0], true_len: 1 });
        assert_eq!(vectorize("a a a a b b", &v, 4).ids, vec![3, 3, 3, 3]);
    }

    #[test]
    fn file_round_trip_and_guards() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let v = small();
        v.save(&path, 16).unwrap();
        let (loaded, max_len) = Vocabulary::load(&path).unwrap();
        assert_eq!(loaded.tokens(), v.tokens());
        assert_eq!(max_len, 16);

        let dup = VocabularyFile { version: 1, max_len: 4, tokens: vec!["x".into(), "x".into()] };
        assert!(matches!(Vocabulary::from_file(dup), Err(Error::Format(_))));
        let future = VocabularyFile { version: 9, max_len: 4, tokens: vec![] };
        assert!(matches!(Vocabulary::from_file(future), Err(Error::VersionMismatch(_))));
    }

    proptest! {
        #[test]
        fn determinism_under_reordering(
            mut docs in proptest::collection::vec("[a-e]{1,2}( [a-e]{1,2}){0,5}", 0..12),
            max_size in 3usize..12,
            seed in any::<u64>(),
        ) {
            let first = build_vocabulary(&docs, max_size).unwrap();
            // Any permutation of the same multiset yields the same mapping.
            let n = docs.len();
            if n > 1 {
                docs.rotate_left((seed as usize) % n);
                docs.reverse();
            }
            let second = build_vocabulary(&docs, max_size).unwrap();
            prop_assert_eq!(first, second);
        }

        #[test]
        fn vectorize_shape_and_range(text in "[a-f ]{0,40}", max_len in 1usize..20) {
            let v = build_vocabulary(["a b c", "c d"], 5).unwrap();
            let seq = vectorize(&text, &v, max_len);
            prop_assert_eq!(seq.ids.len(), max_len);
            prop_assert!(seq.ids.iter().all(|&id| (id as usize) < v.len()));
            prop_assert!(seq.ids[seq.true_len..].iter().all(|&id| id == PAD_ID));
            prop_assert!(seq.tokens().iter().all(|&id| id != PAD_ID));
        }
    }
}
