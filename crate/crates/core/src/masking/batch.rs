use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{apply_masking, select_all, MaskedExample, MaskingPolicy, Stage};
use crate::error::{Error, Result};
use crate::lexicon::{AugmentedVocab, Lexicon};
use crate::rng::{indexed_seed, rng_from_seed, stream_seed};
use crate::tokenizer::{SpecialIds, TokenId};

/// An immutable (lexicon, augmented vocabulary, policy) triple.
#[derive(Debug, Clone)]
pub struct Masker {
    lexicon: Lexicon,
    vocab: AugmentedVocab,
    policy: MaskingPolicy,
}

impl Masker {
    pub fn new(lexicon: Lexicon, policy: MaskingPolicy) -> Result<Self> {
        policy.validate()?;
        let vocab = lexicon.augment();
        Ok(Masker { lexicon, vocab, policy })
    }

    pub fn from_files(lexicon: impl AsRef<Path>, policy: impl AsRef<Path>) -> Result<Self> {
        Self::new(Lexicon::load(lexicon)?, MaskingPolicy::load(policy)?)
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn vocab(&self) -> &AugmentedVocab {
        &self.vocab
    }

    pub fn policy(&self) -> &MaskingPolicy {
        &self.policy
    }

    pub fn special(&self) -> SpecialIds {
        self.lexicon.base_vocab().special
    }

    /// Mask one sequence at the given stage, seeding the sampler directly.
    pub fn mask(&self, tokens: &[TokenId], stage: Stage, seed: u64) -> Result<MaskedExample> {
        let base = self.vocab.base_size();
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= base) {
            return Err(Error::contract(format!("token id {bad} outside base vocabulary of {base}")));
        }
        let policy = MaskingPolicy { stage, ..self.policy.clone() };
        let special = self.special();
        let mut rng = rng_from_seed(seed);
        let occurrences = self.lexicon.find_occurrences(tokens);
        let units = select_all(tokens, &occurrences, &policy, &special, &mut rng)?;
        apply_masking(tokens, &units, &self.vocab, &policy, &special, &mut rng)
    }

    /// Seed used for example `index` of a batch masked with `seed`.
    pub fn example_seed(seed: u64, index: usize) -> u64 {
        indexed_seed(stream_seed(seed, "masking"), index as u64)
    }
}

/// Mask one sequence with a fresh policy-driven sampler.
pub fn mask_tokens(
    tokens: &[TokenId],
    lexicon: &Lexicon,
    policy: &MaskingPolicy,
    seed: u64,
) -> Result<MaskedExample> {
    Masker::new(lexicon.clone(), policy.clone())?.mask(tokens, policy.stage, seed)
}

/// One line of a masked dataset: an example, or the reason it was skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskRecord {
    Example(MaskedExample),
    Error { error: String },
}

impl MaskRecord {
    pub fn example(&self) -> Option<&MaskedExample> {
        match self {
            MaskRecord::Example(e) => Some(e),
            MaskRecord::Error { .. } => None,
        }
    }

    /// Canonical JSON line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

/// Mask every sequence with its own derived seed; failures become error
/// records and the batch continues.
pub fn mask_batch(masker: &Masker, sequences: &[Vec<TokenId>], stage: Stage, seed: u64) -> Vec<MaskRecord> {
    sequences
        .iter()
        .enumerate()
        .map(|(i, seq)| match masker.mask(seq, stage, Masker::example_seed(seed, i)) {
            Ok(ex) => MaskRecord::Example(ex),
            Err(e) => MaskRecord::Error { error: e.to_string() },
        })
        .collect()
}

pub fn write_masked_dataset<W: Write>(mut out: W, records: &[MaskRecord]) -> std::io::Result<()> {
    for r in records {
        out.write_all(r.to_json_line().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_masked_dataset(path: impl AsRef<Path>) -> Result<Vec<MaskRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::format("masked dataset", path, format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
