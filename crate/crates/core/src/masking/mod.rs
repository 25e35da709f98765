//! Mask selection and corruption.
//!
//! One masked example is produced in four steps:
//!
//! 1. In the [`Stage::WordAndPhrase`] stage every lexicon phrase is picked
//!    independently with probability `phrase_rate`. Picked phrases sit
//!    outside the word budget.
//! 2. The word budget `B = round(total_rate * n)` over the `n` non-special
//!    tokens is split: `round(fin_share * B)` positions come from single-word
//!    lexicon terms, the rest from other tokens. An unfillable financial
//!    share spills into the other pool so the total stays exact.
//! 3. With `spans` enabled the non-financial part of the budget is covered by
//!    contiguous spans whose lengths follow a truncated geometric law;
//!    otherwise it is drawn as single positions.
//! 4. [`apply_masking`] corrupts word and span positions 80/10/10 (mask,
//!    random, keep) and collapses each picked phrase into one `[MASK]` whose
//!    label is the phrase's augmented-vocabulary id.
//!
//! No selection ever touches a special token or the first/last position, so
//! every span has a left and a right boundary token.

mod apply;
mod batch;
mod schedule;
mod select;
mod spans;
mod stats;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use apply::apply_masking;
pub use batch::{mask_batch, mask_tokens, read_masked_dataset, write_masked_dataset, MaskRecord, Masker};
pub use schedule::{stage_schedule, StageSplit};
pub use select::{select_phrase_masks, select_word_masks, select_all, WordSelection};
pub use spans::{sample_geometric_spans, TruncatedGeometric};
pub use stats::{masking_stats, MaskingStats};

use crate::error::{Error, Result};
use crate::tokenizer::TokenId;

/// Label value at positions that are not predicted.
pub const IGNORE_LABEL: i64 = -100;

pub const POLICY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    WordOnly,
    WordAndPhrase,
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" | "word_only" | "word-only" => Ok(Stage::WordOnly),
            "phrase" | "word_and_phrase" | "word-and-phrase" => Ok(Stage::WordAndPhrase),
            other => Err(Error::Config(format!("unknown stage {other:?}"))),
        }
    }
}

/// How selected word/span positions are corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplaceSplit {
    pub mask: f64,
    pub random: f64,
    pub keep: f64,
}

impl Default for ReplaceSplit {
    fn default() -> Self {
        ReplaceSplit {
            mask: 0.8,
            random: 0.1,
            keep: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskingPolicy {
    pub version: u32,
    pub total_rate: f64,
    pub fin_share: f64,
    pub phrase_rate: f64,
    pub geo_p: f64,
    pub max_span: usize,
    pub replace_split: ReplaceSplit,
    /// Cover the non-financial share of the budget with geometric spans.
    pub spans: bool,
    pub stage: Stage,
    pub seed: u64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        MaskingPolicy {
            version: POLICY_VERSION,
            total_rate: 0.15,
            fin_share: 0.30,
            phrase_rate: 0.30,
            geo_p: 0.2,
            max_span: 10,
            replace_split: ReplaceSplit::default(),
            spans: true,
            stage: Stage::WordAndPhrase,
            seed: 0,
        }
    }
}

impl MaskingPolicy {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("masking policy: {msg}")));
        if self.version != POLICY_VERSION {
            return bad(&format!("unsupported version {}", self.version));
        }
        if !(self.total_rate > 0.0 && self.total_rate < 1.0) {
            return bad("total_rate must be in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.fin_share) {
            return bad("fin_share must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.phrase_rate) {
            return bad("phrase_rate must be in [0, 1]");
        }
        if !(self.geo_p > 0.0 && self.geo_p <= 1.0) {
            return bad("geo_p must be in (0, 1]");
        }
        if self.max_span == 0 {
            return bad("max_span must be at least 1");
        }
        let s = self.replace_split;
        if [s.mask, s.random, s.keep].iter().any(|p| !(0.0..=1.0).contains(p))
            || (s.mask + s.random + s.keep - 1.0).abs() > 1e-9
        {
            return bad("replace_split must be probabilities summing to 1");
        }
        Ok(())
    }

    pub fn with_stage(mut self, stage: Stage) -> Self {
        self.stage = stage;
        self
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let policy: MaskingPolicy =
            serde_json::from_str(&text).map_err(|e| Error::format("masking policy", path, e))?;
        policy.validate()?;
        Ok(policy)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("policy serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpanKind {
    FinancialWord,
    FinancialPhrase,
    GeometricSpan,
    /// Single non-financial position (the non-financial pool when spans are off).
    RandomWord,
}

impl SpanKind {
    pub fn code(self) -> u8 {
        match self {
            SpanKind::FinancialWord => 0,
            SpanKind::FinancialPhrase => 1,
            SpanKind::GeometricSpan => 2,
            SpanKind::RandomWord => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => SpanKind::FinancialWord,
            1 => SpanKind::FinancialPhrase,
            2 => SpanKind::GeometricSpan,
            3 => SpanKind::RandomWord,
            _ => return None,
        })
    }
}

impl Serialize for SpanKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for SpanKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = u8::deserialize(d)?;
        SpanKind::from_code(code).ok_or_else(|| serde::de::Error::custom(format!("unknown span kind {code}")))
    }
}

/// A contiguous selection in the unmasked sequence, before corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskUnit {
    pub start: usize,
    pub end: usize,
    pub kind: SpanKind,
    /// Lexicon term for phrase units.
    pub term_id: Option<u32>,
}

impl MaskUnit {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// One masked unit of a [`MaskedExample`].
///
/// `start`/`end` and both boundaries index the masked sequence (where a
/// phrase occupies one slot); `source_start`/`source_end` index the original
/// sequence, so `source_end - source_start == target_ids.len()` always.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub start: usize,
    pub end: usize,
    pub left_boundary: usize,
    pub right_boundary: usize,
    pub source_start: usize,
    pub source_end: usize,
    pub target_ids: Vec<TokenId>,
    pub kind: SpanKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedExample {
    pub input_ids: Vec<TokenId>,
    pub labels: Vec<i64>,
    pub spans: Vec<SpanRecord>,
    /// 1 where the generator fills in a prediction (every corrupted slot).
    pub replaced_flags: Vec<u8>,
}

impl MaskedExample {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    /// Positions with a prediction target.
    pub fn masked_positions(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != IGNORE_LABEL)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn phrase_collapses(&self) -> usize {
        self.spans.iter().filter(|s| s.kind == SpanKind::FinancialPhrase).count()
    }

    /// Undo corruption and phrase collapse using the span records.
    pub fn reconstruct(&self) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(self.input_ids.len());
        let mut next = 0;
        for span in &self.spans {
            out.extend_from_slice(&self.input_ids[next..span.start]);
            out.extend_from_slice(&span.target_ids);
            next = span.end;
        }
        out.extend_from_slice(&self.input_ids[next..]);
        out
    }
}
