use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Lexicon;
use crate::tokenizer::TokenId;

/// A base vocabulary extended with one id per lexicon phrase.
///
/// Phrase ids are contiguous in `[base_size, total_size)` and assigned in
/// term-id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedVocab {
    base_size: usize,
    phrase_id_of: BTreeMap<u32, TokenId>,
    term_of: Vec<u32>,
}

impl AugmentedVocab {
    pub fn new(base_size: usize, lexicon: &Lexicon) -> Self {
        assert!(base_size > 0, "base vocabulary must be non-empty");
        let mut phrase_id_of = BTreeMap::new();
        let mut term_of = Vec::new();
        for term in lexicon.terms().iter().filter(|t| t.is_phrase()) {
            phrase_id_of.insert(term.term_id, (base_size + term_of.len()) as TokenId);
            term_of.push(term.term_id);
        }
        AugmentedVocab {
            base_size,
            phrase_id_of,
            term_of,
        }
    }

    pub fn base_size(&self) -> usize {
        self.base_size
    }

    pub fn total_size(&self) -> usize {
        self.base_size + self.term_of.len()
    }

    pub fn phrase_count(&self) -> usize {
        self.term_of.len()
    }

    pub fn phrase_id(&self, term_id: u32) -> Option<TokenId> {
        self.phrase_id_of.get(&term_id).copied()
    }

    /// Inverse of [`phrase_id`](Self::phrase_id).
    pub fn term_of(&self, id: TokenId) -> Option<u32> {
        (id as usize)
            .checked_sub(self.base_size)
            .and_then(|i| self.term_of.get(i).copied())
    }

    pub fn is_phrase_id(&self, id: TokenId) -> bool {
        (id as usize) >= self.base_size && (id as usize) < self.total_size()
    }
}

/// Extend a base vocabulary of `base_size` tokens with the lexicon's phrases.
pub fn augment_vocab(base_size: usize, lexicon: &Lexicon) -> AugmentedVocab {
    AugmentedVocab::new(base_size, lexicon)
}
