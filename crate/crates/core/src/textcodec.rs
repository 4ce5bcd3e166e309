//! Deterministic tokenizer over a small closed vocabulary.
//!
//! Words are kept whole, digits are split into single characters so answer
//! lengths stay predictable, and the four special tokens hold fixed ids.
//! `normalize` is the canonical spacing used for all text comparisons.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{collections::BTreeMap, collections::BTreeSet, format};

use serde::{Deserialize, Serialize};

pub const MASK_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const NUM_SPECIALS: usize = 4;

pub const SPECIAL_RENDER: [&str; NUM_SPECIALS] = ["<mask>", "<eos>", "<bos>", "<sep>"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
}

impl TokenSeq {
    pub fn new(ids: Vec<u32>) -> Self {
        TokenSeq { ids }
    }
    pub fn len(&self) -> usize {
        self.ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("invalid token id {0} for vocab of size {1}")]
    InvalidId(u32, usize),
}

/// Bijective token <-> id map; ids 0..3 are the specials, the rest are
/// corpus units in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocab {
    /// Build from all prompts, targets, and traces of the given instances.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vocab {
        let mut units: BTreeSet<String> = BTreeSet::new();
        for t in texts {
            for u in tokenize(t) {
                units.insert(u);
            }
        }
        Vocab::from_units(units.into_iter().collect())
    }

    fn from_units(units: Vec<String>) -> Vocab {
        let mut tokens: Vec<String> = SPECIAL_RENDER.iter().map(|s| (*s).to_owned()).collect();
        tokens.extend(units);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }

    /// Reconstruct from a serialized ordered token list (specials first).
    pub fn from_token_list(tokens: Vec<String>) -> Vocab {
        assert!(tokens.len() >= NUM_SPECIALS);
        for (i, s) in SPECIAL_RENDER.iter().enumerate() {
            assert_eq!(tokens[i], *s, "special token out of place");
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }

    pub fn token_list(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn encode(&self, text: &str) -> Result<TokenSeq, CodecError> {
        let mut ids = Vec::new();
        for unit in tokenize(text) {
            match self.index.get(&unit) {
                // units never collide with specials: tokenize splits '<'
                Some(&id) if (id as usize) >= NUM_SPECIALS => ids.push(id),
                _ => return Err(CodecError::UnknownToken(unit)),
            }
        }
        Ok(TokenSeq::new(ids))
    }

    pub fn decode_text(&self, seq: &TokenSeq) -> Result<String, CodecError> {
        let mut toks = Vec::with_capacity(seq.len());
        for &id in &seq.ids {
            match self.tokens.get(id as usize) {
                Some(t) => toks.push(t.as_str()),
                None => return Err(CodecError::InvalidId(id, self.tokens.len())),
            }
        }
        Ok(join_units(&toks))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum UnitClass {
    Word,
    Digit,
    /// Operators and separators that bind tightly on both sides: + - = / ; : <
    Tight,
    /// Clause punctuation: no space before, space after when a word follows.
    Clause,
}

fn classify(unit: &str) -> UnitClass {
    if unit.len() > 1 && unit.starts_with('<') && unit.ends_with('>') {
        // rendered special tokens space like words
        return UnitClass::Word;
    }
    let c = unit.chars().next().unwrap_or(' ');
    if c.is_ascii_digit() {
        UnitClass::Digit
    } else if c.is_alphabetic() {
        UnitClass::Word
    } else if matches!(c, ',' | '.' | '?' | '!') {
        UnitClass::Clause
    } else {
        UnitClass::Tight
    }
}

/// Split text into units: alphabetic runs stay whole, digits become single
/// characters, any other non-whitespace character is its own unit.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut units = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphabetic() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            units.push(core::mem::take(&mut word));
        }
        if c.is_whitespace() {
            continue;
        }
        units.push(format!("{c}"));
    }
    if !word.is_empty() {
        units.push(word);
    }
    units
}

/// Join units back into text with canonical spacing.
pub fn join_units<S: AsRef<str>>(units: &[S]) -> String {
    let mut out = String::new();
    let mut prev: Option<UnitClass> = None;
    for u in units {
        let u = u.as_ref();
        let cls = classify(u);
        if let Some(p) = prev {
            let space = match cls {
                UnitClass::Word => !matches!(p, UnitClass::Tight),
                UnitClass::Digit => matches!(p, UnitClass::Word | UnitClass::Clause),
                UnitClass::Tight | UnitClass::Clause => false,
            };
            if space {
                out.push(' ');
            }
        }
        out.push_str(u);
        prev = Some(cls);
    }
    out
}

/// Canonical text form: tokenize then rejoin. Used for all comparisons.
pub fn normalize(text: &str) -> String {
    join_units(&tokenize(text))
}

/// Number of tokens strictly before the first EOS id (all of them if none).
pub fn count_semantic_tokens(seq: &TokenSeq) -> usize {
    seq.ids
        .iter()
        .position(|&id| id == EOS_ID)
        .unwrap_or(seq.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab_for(texts: &[&str]) -> Vocab {
        Vocab::build(texts.iter().copied())
    }

    #[test]
    fn digits_are_single_char_tokens() {
        assert_eq!(tokenize("94"), vec!["9", "4"]);
        assert_eq!(tokenize("99+18-23"), vec!["9", "9", "+", "1", "8", "-", "2", "3"]);
    }

    #[test]
    fn round_trip_is_normalization_stable() {
        let v = vocab_for(&["What is the result of 99+18-23?"]);
        let text = "What is the result of 99+18-23?";
        let seq = v.encode(text).unwrap();
        assert_eq!(v.decode_text(&seq).unwrap(), normalize(text));
        // canonical form of this template is the template itself
        assert_eq!(normalize(text), text);
    }

    #[test]
    fn trace_spacing_is_canonical() {
        let t = "99+18=117;117-23=94;final 94";
        assert_eq!(normalize(t), t);
    }

    #[test]
    fn empty_round_trip() {
        let v = vocab_for(&["x"]);
        let seq = v.encode("").unwrap();
        assert!(seq.is_empty());
        assert_eq!(v.decode_text(&seq).unwrap(), "");
    }

    #[test]
    fn unknown_token_is_rejected() {
        let v = vocab_for(&["3+4"]);
        assert_eq!(
            v.encode("3*4"),
            Err(CodecError::UnknownToken("*".into()))
        );
    }

    #[test]
    fn specials_never_come_from_text() {
        let v = vocab_for(&["<eos> x"]);
        let seq = v.encode("<eos>").unwrap();
        assert!(seq.ids.iter().all(|&id| id as usize >= NUM_SPECIALS));
    }

    #[test]
    fn specials_render_in_decoded_text() {
        let v = vocab_for(&["94"]);
        let mut seq = v.encode("94").unwrap();
        seq.ids.push(EOS_ID);
        seq.ids.push(EOS_ID);
        let text = v.decode_text(&seq).unwrap();
        assert_eq!(text, "94 <eos> <eos>");
    }

    #[test]
    fn vocab_is_order_independent() {
        let a = vocab_for(&["3+4", "the key"]);
        let b = vocab_for(&["the key", "3+4"]);
        assert_eq!(a, b);
    }

    #[test]
    fn semantic_token_count() {
        assert_eq!(count_semantic_tokens(&TokenSeq::new(vec![7, 8, EOS_ID, EOS_ID])), 2);
        assert_eq!(count_semantic_tokens(&TokenSeq::new(vec![EOS_ID, 7])), 0);
        assert_eq!(count_semantic_tokens(&TokenSeq::new(vec![7, 8])), 2);
    }

    #[test]
    fn invalid_id_is_rejected() {
        let v = vocab_for(&["x"]);
        let bad = TokenSeq::new(vec![v.len() as u32]);
        assert!(matches!(v.decode_text(&bad), Err(CodecError::InvalidId(_, _))));
    }
}
