//! Word-level tokenizer.
//!
//! Text splits on whitespace; each of `. , : ; ? !` and every newline is a
//! token of its own. Apostrophes stay inside words, so `I'll` is one token.
//! Decoding re-attaches punctuation to the preceding word and puts no spaces
//! around newlines, which makes `decode(encode(t)) == t` for any in-vocab
//! text already in that normal form.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const UNK: u32 = 2;
const SPECIALS: [&str; 3] = ["<pad>", "<bos>", "<unk>"];
const PUNCT: &[char] = &['.', ',', ':', ';', '?', '!'];

/// Splits text into word-level pieces.
pub fn split_words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for (i, line) in text.split('\n').enumerate() {
        if i > 0 {
            out.push("\n");
        }
        for word in line.split_whitespace() {
            let mut start = 0;
            for (j, c) in word.char_indices() {
                if PUNCT.contains(&c) {
                    if start < j {
                        out.push(&word[start..j]);
                    }
                    out.push(&word[j..j + 1]);
                    start = j + 1;
                }
            }
            if start < word.len() {
                out.push(&word[start..]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    vocab: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Tokenizer {
    /// Vocabulary: specials, then `reserved` in the given order, then every
    /// other word in `texts`, sorted.
    pub fn build<'a>(reserved: &[&str], texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for r in reserved {
            if !vocab.iter().any(|v| v == r) {
                vocab.push(r.to_string());
            }
        }
        let mut rest = BTreeSet::new();
        for t in texts {
            for w in split_words(t) {
                rest.insert(w.to_string());
            }
        }
        for w in rest {
            if !vocab.contains(&w) {
                vocab.push(w);
            }
        }
        Self::from_vocab(vocab).expect("built vocabulary is valid")
    }

    pub fn from_vocab(vocab: Vec<String>) -> Result<Self> {
        if vocab.len() < SPECIALS.len() || vocab[..3] != SPECIALS {
            return Err(Error::config("vocab", "must start with <pad>, <bos>, <unk>"));
        }
        let mut ids = HashMap::with_capacity(vocab.len());
        for (i, w) in vocab.iter().enumerate() {
            if ids.insert(w.clone(), i as u32).is_some() {
                return Err(Error::config("vocab", format!("duplicate entry `{w}`")));
            }
        }
        Ok(Self { vocab, ids })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.ids.get(word).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    /// Unknown words map to [`UNK`]. No BOS is added.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        split_words(text)
            .into_iter()
            .map(|w| self.id(w).unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        let mut prev_newline = true;
        for &id in ids {
            let w = self.token(id).unwrap_or(SPECIALS[UNK as usize]);
            let attach = w == "\n" || prev_newline || (w.len() == 1 && w.starts_with(PUNCT));
            if !attach {
                out.push(' ');
            }
            out.push_str(w);
            prev_newline = w == "\n";
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.vocab)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_vocab(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_and_newlines_split() {
        assert_eq!(
            split_words("Answer with yes or no.\nPremise: I'll go"),
            vec!["Answer", "with", "yes", "or", "no", ".", "\n", "Premise", ":", "I'll", "go"]
        );
    }

    #[test]
    fn round_trip_normal_form() {
        let text = "Premise: a b, c.\nAnswer: Yes";
        let tok = Tokenizer::build(&[], [text]);
        assert_eq!(tok.decode(&tok.encode(text)), text);
    }

    #[test]
    fn reserved_words_come_first() {
        let tok = Tokenizer::build(&["Yes", "No"], ["zeta alpha"]);
        assert_eq!(tok.id("Yes"), Some(3));
        assert_eq!(tok.id("No"), Some(4));
        assert_eq!(tok.id("alpha"), Some(5));
        assert_eq!(tok.encode("omega"), vec![UNK]);
    }

    #[test]
    fn json_round_trip() {
        let tok = Tokenizer::build(&["Yes"], ["a b c"]);
        let back = Tokenizer::from_json(&tok.to_json().unwrap()).unwrap();
        assert_eq!(back.encode("c b a Yes"), tok.encode("c b a Yes"));
    }
}
