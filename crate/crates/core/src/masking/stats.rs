use serde::{Deserialize, Serialize};

use super::{MaskedExample, SpanKind};
use crate::tokenizer::SpecialIds;

/// Realized masking rates over a masked dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskingStats {
    pub examples: usize,
    /// Original (pre-collapse) tokens, specials included.
    pub tokens: usize,
    /// Original non-special tokens, the denominator of the budget.
    pub maskable_tokens: usize,
    /// Word and span positions (phrases excluded).
    pub masked_positions: usize,
    pub mask_rate: f64,
    pub financial_masks: usize,
    pub financial_share: f64,
    pub phrase_collapses: usize,
    pub phrase_tokens: usize,
    /// Index `l` counts geometric spans of length `l`.
    pub span_length_histogram: Vec<u64>,
    pub warnings: Vec<String>,
}

pub fn masking_stats<'a>(examples: impl IntoIterator<Item = &'a MaskedExample>, special: &SpecialIds) -> MaskingStats {
    let mut s = MaskingStats::default();
    for ex in examples {
        s.examples += 1;
        let mut covered = vec![false; ex.len()];
        for span in &ex.spans {
            covered[span.start..span.end].iter_mut().for_each(|c| *c = true);
            let n = span.source_end - span.source_start;
            match span.kind {
                SpanKind::FinancialPhrase => {
                    s.phrase_collapses += 1;
                    s.phrase_tokens += n;
                    s.tokens += n;
                    s.maskable_tokens += n;
                    continue;
                }
                SpanKind::FinancialWord => s.financial_masks += n,
                SpanKind::GeometricSpan => {
                    if s.span_length_histogram.len() <= n {
                        s.span_length_histogram.resize(n + 1, 0);
                    }
                    s.span_length_histogram[n] += 1;
                }
                SpanKind::RandomWord => {}
            }
            s.masked_positions += n;
            s.tokens += n;
            s.maskable_tokens += n;
        }
        for (i, &t) in ex.input_ids.iter().enumerate() {
            if !covered[i] {
                s.tokens += 1;
                if !special.contains(t) {
                    s.maskable_tokens += 1;
                }
            }
        }
    }
    if s.examples == 0 {
        s.warnings.push("empty dataset".into());
    }
    if s.maskable_tokens == 0 {
        s.warnings.push("no maskable tokens: every token is special".into());
    } else {
        s.mask_rate = s.masked_positions as f64 / s.maskable_tokens as f64;
    }
    if s.masked_positions > 0 {
        s.financial_share = s.financial_masks as f64 / s.masked_positions as f64;
    }
    s
}
