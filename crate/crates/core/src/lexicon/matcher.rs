use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::tokenizer::TokenId;

/// A lexicon match over a token sequence, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhraseOccurrence {
    pub start: usize,
    pub end: usize,
    pub term_id: u32,
}

impl PhraseOccurrence {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, Default)]
struct Node {
    children: HashMap<TokenId, u32>,
    term: Option<u32>,
}

/// Trie over token-id patterns.
///
/// Matching is leftmost-longest and non-overlapping: scanning left to right,
/// the longest pattern starting at the current position wins and the scan
/// resumes after it. Cost is O(n * longest pattern).
#[derive(Debug, Clone)]
pub struct PhraseMatcher {
    nodes: Vec<Node>,
    patterns: usize,
}

impl Default for PhraseMatcher {
    fn default() -> Self {
        PhraseMatcher {
            nodes: vec![Node::default()],
            patterns: 0,
        }
    }
}

impl PhraseMatcher {
    /// Returns false (and leaves the trie untouched) when `pattern` is empty
    /// or already present.
    pub fn insert(&mut self, pattern: &[TokenId], term_id: u32) -> bool {
        if pattern.is_empty() {
            return false;
        }
        let mut at = 0usize;
        for &tok in pattern {
            at = match self.nodes[at].children.get(&tok) {
                Some(&next) => next as usize,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[at].children.insert(tok, next as u32);
                    next
                }
            };
        }
        if self.nodes[at].term.is_some() {
            return false;
        }
        self.nodes[at].term = Some(term_id);
        self.patterns += 1;
        true
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns
    }

    /// Term id of the pattern equal to `seq`, if any.
    pub fn lookup(&self, seq: &[TokenId]) -> Option<u32> {
        let mut at = 0usize;
        for tok in seq {
            at = *self.nodes[at].children.get(tok)? as usize;
        }
        self.nodes[at].term
    }

    /// Longest pattern starting at `start`, as `(end, term_id)`.
    pub fn longest_at(&self, tokens: &[TokenId], start: usize) -> Option<(usize, u32)> {
        let mut at = 0usize;
        let mut best = None;
        for (i, tok) in tokens.iter().enumerate().skip(start) {
            match self.nodes[at].children.get(tok) {
                Some(&next) => at = next as usize,
                None => break,
            }
            if let Some(term) = self.nodes[at].term {
                best = Some((i + 1, term));
            }
        }
        best
    }

    pub fn find_all(&self, tokens: &[TokenId]) -> Vec<PhraseOccurrence> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            match self.longest_at(tokens, i) {
                Some((end, term_id)) => {
                    out.push(PhraseOccurrence { start: i, end, term_id });
                    i = end;
                }
                None => i += 1,
            }
        }
        out
    }
}
