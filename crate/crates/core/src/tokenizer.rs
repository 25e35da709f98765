//! Whitespace + wordpiece tokenizer over a fixed vocabulary file.
//!
//! The vocabulary file holds one token per line; its line number is the token
//! id. Continuation pieces carry a `##` prefix. The five special tokens
//! `[PAD] [UNK] [CLS] [SEP] [MASK]` must be present.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

const MAX_WORD_CHARS: usize = 100;

/// Ids of the special tokens of a base vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialIds {
    pub pad: TokenId,
    pub unk: TokenId,
    pub cls: TokenId,
    pub sep: TokenId,
    pub mask: TokenId,
}

impl SpecialIds {
    pub fn contains(&self, id: TokenId) -> bool {
        id == self.pad || id == self.unk || id == self.cls || id == self.sep || id == self.mask
    }
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    special: SpecialIds,
}

impl Tokenizer {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        let find = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("vocabulary lacks special token {name}")))
        };
        let special = SpecialIds {
            pad: find(PAD)?,
            unk: find(UNK)?,
            cls: find(CLS)?,
            sep: find(SEP)?,
            mask: find(MASK)?,
        };
        Ok(Tokenizer {
            tokens,
            index,
            special,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text
            .lines()
            .map(|l| l.trim_end_matches('\r').to_string())
            .filter(|l| !l.is_empty())
            .collect();
        Self::from_tokens(tokens)
    }

    /// Whole-word vocabulary covering every basic token of `texts`, specials
    /// first, then words in sorted order.
    pub fn whole_word_vocab<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words = BTreeSet::new();
        for text in texts {
            words.extend(basic_split(text));
        }
        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP, MASK].iter().map(|s| s.to_string()).collect();
        tokens.extend(words.into_iter().filter(|w| !is_special_name(w)));
        Self::from_tokens(tokens).expect("generated vocabulary is well-formed")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = self.tokens.join("\n");
        out.push('\n');
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn special(&self) -> SpecialIds {
        self.special
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Token ids of `text` without `[CLS]`/`[SEP]`.
    pub fn encode_words(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for word in basic_split(text) {
            self.wordpiece(&word, &mut out);
        }
        out
    }

    /// `[CLS] words... [SEP]`, truncating the body so the result fits in
    /// `max_len` tokens.
    pub fn encode(&self, text: &str, max_len: usize) -> Vec<TokenId> {
        let mut body = self.encode_words(text);
        body.truncate(max_len.saturating_sub(2));
        let mut out = Vec::with_capacity(body.len() + 2);
        out.push(self.special.cls);
        out.extend(body);
        out.push(self.special.sep);
        out
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).unwrap_or(UNK);
            if let Some(rest) = tok.strip_prefix("##") {
                out.push_str(rest);
            } else {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(tok);
            }
        }
        out
    }

    fn wordpiece(&self, word: &str, out: &mut Vec<TokenId>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_WORD_CHARS {
            out.push(self.special.unk);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if let Some(&id) = self.index.get(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.special.unk);
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

fn is_special_name(s: &str) -> bool {
    matches!(s, PAD | UNK | CLS | SEP | MASK)
}

/// Lowercase, split on whitespace, and split every punctuation character into
/// its own token. Bracketed special-token names are kept whole.
pub fn basic_split(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        if is_special_name(raw) {
            out.push(raw.to_string());
            continue;
        }
        let mut cur = String::new();
        for c in raw.chars() {
            if c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace()) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.extend(c.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Tokenizer {
        let toks = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "margin", "call", "break", "-", "even", "analysis", "earn", "##ings"];
        Tokenizer::from_tokens(toks.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn splits_punctuation() {
        assert_eq!(basic_split("Break-even  Analysis."), vec!["break", "-", "even", "analysis", "."]);
        assert_eq!(basic_split("[MASK] x"), vec!["[MASK]", "x"]);
    }

    #[test]
    fn wordpiece_greedy() {
        let t = toy();
        assert_eq!(t.encode_words("earnings"), vec![11, 12]);
        assert_eq!(t.encode_words("margin call"), vec![5, 6]);
        assert_eq!(t.encode_words("unknown"), vec![1]);
        assert_eq!(t.decode(&[11, 12, 6]), "earnings call");
    }

    #[test]
    fn encode_wraps_and_truncates() {
        let t = toy();
        assert_eq!(t.encode("margin call", 16), vec![2, 5, 6, 3]);
        assert_eq!(t.encode("margin call", 3), vec![2, 5, 3]);
    }

    #[test]
    fn missing_specials_rejected() {
        let err = Tokenizer::from_tokens(vec!["a".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn whole_word_vocab_covers_corpus() {
        let t = Tokenizer::whole_word_vocab(["Gross margin rose", "margin call"]);
        assert_eq!(t.size(), 5 + 4);
        assert!(!t.encode_words("gross margin call rose").contains(&t.special().unk));
    }
}
