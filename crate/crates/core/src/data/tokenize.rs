use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Byte-mode padding id; bytes themselves occupy 0..=255.
pub const BYTE_PAD: u32 = 256;
const WORD_PAD: u32 = 0;
const WORD_UNK: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerMode {
    Byte,
    Word,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerSpec {
    pub mode: TokenizerMode,
    pub max_len: usize,
    #[serde(default = "default_true")]
    pub lowercase: bool,
    /// Word mode: tokens seen fewer times than this in training map to UNK.
    #[serde(default = "default_min_freq")]
    pub min_freq: usize,
}

fn default_true() -> bool {
    true
}

fn default_min_freq() -> usize {
    2
}

impl TokenizerSpec {
    pub fn byte() -> Self {
        TokenizerSpec {
            mode: TokenizerMode::Byte,
            max_len: 1000,
            lowercase: true,
            min_freq: 2,
        }
    }

    pub fn word() -> Self {
        TokenizerSpec {
            mode: TokenizerMode::Word,
            max_len: 256,
            lowercase: true,
            min_freq: 2,
        }
    }

    pub fn validate(&self, max_width: usize) -> Result<()> {
        if self.max_len == 0 || self.max_len < max_width {
            return Err(Error::Config(format!(
                "max_len {} must be positive and at least the widest filter ({max_width})",
                self.max_len
            )));
        }
        if self.min_freq == 0 {
            return Err(Error::Config("min_freq must be at least 1".into()));
        }
        Ok(())
    }

    fn words<'a>(&self, text: &'a str) -> Vec<std::borrow::Cow<'a, str>> {
        text.split_whitespace()
            .map(|w| {
                if self.lowercase {
                    std::borrow::Cow::Owned(w.to_lowercase())
                } else {
                    std::borrow::Cow::Borrowed(w)
                }
            })
            .collect()
    }
}

/// Token-to-id mapping. Byte mode is closed (ids 0–255 plus PAD = 256); word
/// mode reserves PAD = 0 and UNK = 1 and numbers known words from 2 in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Vocab {
    Byte,
    Word {
        /// Words for ids 2, 3, ...
        words: Vec<String>,
        #[serde(skip)]
        index: HashMap<String, u32>,
    },
}

impl Vocab {
    pub fn build<'a>(spec: &TokenizerSpec, texts: impl IntoIterator<Item = &'a str>) -> Vocab {
        match spec.mode {
            TokenizerMode::Byte => Vocab::Byte,
            TokenizerMode::Word => {
                let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                for text in texts {
                    for w in spec.words(text) {
                        *counts.entry(w.into_owned()).or_default() += 1;
                    }
                }
                let words = counts
                    .into_iter()
                    .filter(|(_, c)| *c >= spec.min_freq)
                    .map(|(w, _)| w)
                    .collect();
                Vocab::from_words(words)
            }
        }
    }

    pub fn from_words(words: Vec<String>) -> Vocab {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32 + 2))
            .collect();
        Vocab::Word { words, index }
    }

    /// Restores the lookup table after deserialisation.
    pub fn reindex(self) -> Vocab {
        match self {
            Vocab::Word { words, .. } => Vocab::from_words(words),
            v => v,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Vocab::Byte => 257,
            Vocab::Word { words, .. } => words.len() + 2,
        }
    }

    pub fn pad(&self) -> u32 {
        match self {
            Vocab::Byte => BYTE_PAD,
            Vocab::Word { .. } => WORD_PAD,
        }
    }

    pub fn mode(&self) -> TokenizerMode {
        match self {
            Vocab::Byte => TokenizerMode::Byte,
            Vocab::Word { .. } => TokenizerMode::Word,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenizeError {
    #[error("no tokens after processing")]
    Empty,
    #[error("vocabulary mode {vocab:?} does not match tokenizer mode {spec:?}")]
    ModeMismatch { spec: TokenizerMode, vocab: TokenizerMode },
}

/// Maps text to exactly `spec.max_len` ids: truncated, then right-padded.
pub fn tokenize(text: &str, spec: &TokenizerSpec, vocab: &Vocab) -> std::result::Result<Vec<u32>, TokenizeError> {
    if spec.mode != vocab.mode() {
        return Err(TokenizeError::ModeMismatch {
            spec: spec.mode,
            vocab: vocab.mode(),
        });
    }
    let mut ids: Vec<u32> = match vocab {
        Vocab::Byte => text.bytes().take(spec.max_len).map(u32::from).collect(),
        Vocab::Word { index, .. } => spec
            .words(text)
            .iter()
            .take(spec.max_len)
            .map(|w| index.get(w.as_ref()).copied().unwrap_or(WORD_UNK))
            .collect(),
    };
    if ids.is_empty() {
        return Err(TokenizeError::Empty);
    }
    ids.resize(spec.max_len, vocab.pad());
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_mode_pads() {
        let spec = TokenizerSpec {
            max_len: 4,
            ..TokenizerSpec::byte()
        };
        assert_eq!(tokenize("ab", &spec, &Vocab::Byte).unwrap(), vec![97, 98, 256, 256]);
    }

    #[test]
    fn byte_mode_truncates() {
        let text: String = (0..1500).map(|i| char::from(b'a' + (i % 26) as u8)).collect();
        let ids = tokenize(&text, &TokenizerSpec::byte(), &Vocab::Byte).unwrap();
        assert_eq!(ids.len(), 1000);
        assert!(ids.iter().zip(text.bytes()).all(|(&i, b)| i == u32::from(b)));
    }

    #[test]
    fn word_mode_lowercases_and_pads() {
        let spec = TokenizerSpec {
            max_len: 3,
            ..TokenizerSpec::word()
        };
        let vocab = Vocab::from_words(vec!["the".into()]);
        assert_eq!(tokenize("The the", &spec, &vocab).unwrap(), vec![2, 2, 0]);
        assert_eq!(tokenize("cat The", &spec, &vocab).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn empty_text_is_reported() {
        assert_eq!(tokenize("", &TokenizerSpec::byte(), &Vocab::Byte), Err(TokenizeError::Empty));
        let vocab = Vocab::from_words(vec![]);
        assert_eq!(tokenize("  \n", &TokenizerSpec::word(), &vocab), Err(TokenizeError::Empty));
        assert!(matches!(
            tokenize("x", &TokenizerSpec::word(), &Vocab::Byte),
            Err(TokenizeError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn word_vocab_respects_min_freq() {
        let vocab = Vocab::build(&TokenizerSpec::word(), ["a b b", "B c a"]);
        match &vocab {
            Vocab::Word { words, .. } => assert_eq!(words, &["a", "b"]),
            _ => unreachable!(),
        }
        assert_eq!(vocab.size(), 4);
        let json = serde_json::to_string(&vocab).unwrap();
        let back: Vocab = serde_json::from_str::<Vocab>(&json).unwrap().reindex();
        assert_eq!(back, vocab);
    }

    proptest! {
        #[test]
        fn output_length_is_exact(text in "\\PC{1,80}", max_len in 1usize..64) {
            let spec = TokenizerSpec { max_len, ..TokenizerSpec::byte() };
            let ids = tokenize(&text, &spec, &Vocab::Byte).unwrap();
            prop_assert_eq!(ids.len(), max_len);
            // closed vocabulary: never anything beyond PAD
            prop_assert!(ids.iter().all(|&i| i <= BYTE_PAD));
        }

        #[test]
        fn word_output_length_is_exact(text in "[a-z ]{0,60}x", max_len in 1usize..20) {
            let spec = TokenizerSpec { max_len, ..TokenizerSpec::word() };
            let vocab = Vocab::build(&spec, [text.as_str()]);
            let ids = tokenize(&text, &spec, &vocab).unwrap();
            prop_assert_eq!(ids.len(), max_len);
            prop_assert!(ids.iter().all(|&i| (i as usize) < vocab.size()));
        }
    }
}
