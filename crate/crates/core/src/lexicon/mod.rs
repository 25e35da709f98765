//! Domain term dictionary.
//!
//! A [`Lexicon`] is built from one or more plain-text term lists (one term per
//! line, `#` starts a comment line). Each line is normalized (lowercased,
//! trimmed, internal whitespace collapsed to single spaces), deduplicated, and
//! tokenized with the base tokenizer. Terms of one token are *words*; longer
//! ones are *phrases*. Term ids follow the sorted order of the normalized
//! surfaces, so the same input files always give the same lexicon.

mod matcher;
mod vocab;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use matcher::{PhraseMatcher, PhraseOccurrence};
pub use vocab::{augment_vocab, AugmentedVocab};

use crate::error::{Error, Result};
use crate::tokenizer::{SpecialIds, TokenId, Tokenizer};

pub const LEXICON_FORMAT: &str = "finlm-lexicon";
pub const LEXICON_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub term_id: u32,
    pub surface: String,
    pub token_ids: Vec<TokenId>,
}

impl Term {
    pub fn is_phrase(&self) -> bool {
        self.token_ids.len() >= 2
    }

    pub fn token_len(&self) -> usize {
        self.token_ids.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Some character sequence mapped to `[UNK]`.
    UnknownToken,
    /// Tokenized to nothing (the line was only punctuation the vocabulary lacks, etc.).
    Empty,
    /// Another surface already produced the same token sequence.
    DuplicateTokens,
}

/// A dictionary line that did not become a term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedTerm {
    pub surface: String,
    pub reason: RejectReason,
}

/// Size and special ids of the base vocabulary a lexicon was tokenized with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseVocab {
    pub size: usize,
    pub special: SpecialIds,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    terms: Vec<Term>,
    word_index: BTreeMap<TokenId, u32>,
    matcher: PhraseMatcher,
    source_digest: String,
    base: BaseVocab,
    rejected: Vec<RejectedTerm>,
}

/// Canonical form of a dictionary line.
pub fn normalize(line: &str) -> String {
    line.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalized, deduplicated, sorted surfaces of dictionary text.
pub fn parse_dictionary(text: &str) -> BTreeSet<String> {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .map(normalize)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Build a lexicon from dictionary files.
pub fn load_lexicon<P: AsRef<Path>>(dictionary_files: &[P], tokenizer: &Tokenizer) -> Result<Lexicon> {
    let mut hasher = Sha256::new();
    let mut surfaces = BTreeSet::new();
    for path in dictionary_files {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes).map_err(|e| Error::format("dictionary", path, e))?;
        hasher.update((text.len() as u64).to_le_bytes());
        hasher.update(text.as_bytes());
        surfaces.extend(parse_dictionary(&text));
    }
    let digest = hex::encode(hasher.finalize());
    Lexicon::from_surfaces(surfaces, tokenizer, digest)
}

impl Lexicon {
    /// Build from already-parsed surfaces. Surfaces are normalized again, so
    /// callers may pass raw lines.
    pub fn from_surfaces<I, S>(surfaces: I, tokenizer: &Tokenizer, source_digest: String) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let surfaces: BTreeSet<String> = surfaces
            .into_iter()
            .map(|s| normalize(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        if surfaces.is_empty() {
            return Err(Error::Config("dictionary files contain no terms".into()));
        }
        let unk = tokenizer.special().unk;
        let mut rejected = Vec::new();
        let mut candidates = Vec::new();
        for surface in surfaces {
            let ids = tokenizer.encode_words(&surface);
            let reason = if ids.is_empty() {
                Some(RejectReason::Empty)
            } else if ids.contains(&unk) {
                Some(RejectReason::UnknownToken)
            } else {
                None
            };
            match reason {
                Some(reason) => {
                    log::warn!("lexicon: excluding {surface:?} ({reason:?})");
                    rejected.push(RejectedTerm { surface, reason });
                }
                None => candidates.push((surface, ids)),
            }
        }
        let base = BaseVocab {
            size: tokenizer.size(),
            special: tokenizer.special(),
        };
        Self::assemble(candidates, base, source_digest, rejected)
    }

    fn assemble(
        candidates: Vec<(String, Vec<TokenId>)>,
        base: BaseVocab,
        source_digest: String,
        mut rejected: Vec<RejectedTerm>,
    ) -> Result<Self> {
        let mut terms = Vec::with_capacity(candidates.len());
        let mut matcher = PhraseMatcher::default();
        let mut word_index = BTreeMap::new();
        for (surface, token_ids) in candidates {
            let term_id = terms.len() as u32;
            if !matcher.insert(&token_ids, term_id) {
                log::warn!("lexicon: excluding {surface:?} (duplicate token sequence)");
                rejected.push(RejectedTerm {
                    surface,
                    reason: RejectReason::DuplicateTokens,
                });
                continue;
            }
            if token_ids.len() == 1 {
                word_index.insert(token_ids[0], term_id);
            }
            terms.push(Term {
                term_id,
                surface,
                token_ids,
            });
        }
        Ok(Lexicon {
            terms,
            word_index,
            matcher,
            source_digest,
            base,
            rejected,
        })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn term(&self, term_id: u32) -> Option<&Term> {
        self.terms.get(term_id as usize)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn phrase_count(&self) -> usize {
        self.terms.iter().filter(|t| t.is_phrase()).count()
    }

    /// Term id of the single-word term with this token id.
    pub fn word_term(&self, token: TokenId) -> Option<u32> {
        self.word_index.get(&token).copied()
    }

    pub fn matcher(&self) -> &PhraseMatcher {
        &self.matcher
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    pub fn base_vocab(&self) -> BaseVocab {
        self.base
    }

    pub fn rejected(&self) -> &[RejectedTerm] {
        &self.rejected
    }

    pub fn augment(&self) -> AugmentedVocab {
        AugmentedVocab::new(self.base.size, self)
    }

    /// All leftmost-longest, non-overlapping term occurrences, sorted by start.
    pub fn find_occurrences(&self, tokens: &[TokenId]) -> Vec<PhraseOccurrence> {
        self.matcher.find_all(tokens)
    }

    pub fn to_file(&self) -> LexiconFile {
        LexiconFile {
            format: LEXICON_FORMAT.to_string(),
            version: LEXICON_VERSION,
            source_digest: self.source_digest.clone(),
            base_vocab: self.base,
            terms: self.terms.clone(),
            rejected: self.rejected.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut json = serde_json::to_string_pretty(&self.to_file())?;
        json.push('\n');
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: LexiconFile =
            serde_json::from_str(&text).map_err(|e| Error::format("lexicon file", path, e))?;
        Self::from_file(file).map_err(|e| match e {
            Error::Config(detail) => Error::format("lexicon file", path, detail),
            other => other,
        })
    }

    pub fn from_file(file: LexiconFile) -> Result<Self> {
        if file.format != LEXICON_FORMAT {
            return Err(Error::Config(format!("unexpected format tag {:?}", file.format)));
        }
        if file.version != LEXICON_VERSION {
            return Err(Error::Config(format!("unsupported lexicon version {}", file.version)));
        }
        let mut seen = BTreeSet::new();
        let mut candidates = Vec::with_capacity(file.terms.len());
        for (i, term) in file.terms.into_iter().enumerate() {
            if term.term_id as usize != i {
                return Err(Error::Config(format!("term {i} has id {}", term.term_id)));
            }
            if term.surface.is_empty() || normalize(&term.surface) != term.surface {
                return Err(Error::Config(format!("term {i} surface is not normalized")));
            }
            if !seen.insert(term.surface.clone()) {
                return Err(Error::Config(format!("duplicate surface {:?}", term.surface)));
            }
            if term.token_ids.is_empty() || term.token_ids.iter().any(|&t| t as usize >= file.base_vocab.size) {
                return Err(Error::Config(format!("term {i} has out-of-range token ids")));
            }
            candidates.push((term.surface, term.token_ids));
        }
        let n = candidates.len();
        let lex = Self::assemble(candidates, file.base_vocab, file.source_digest, file.rejected)?;
        if lex.terms.len() != n {
            return Err(Error::Config("two terms share a token sequence".into()));
        }
        Ok(lex)
    }
}

/// On-disk form of a [`Lexicon`] (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconFile {
    pub format: String,
    pub version: u32,
    pub source_digest: String,
    pub base_vocab: BaseVocab,
    pub terms: Vec<Term>,
    pub rejected: Vec<RejectedTerm>,
}
