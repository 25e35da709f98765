use rand::Rng;

use super::{MaskUnit, MaskedExample, MaskingPolicy, SpanKind, SpanRecord, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::lexicon::AugmentedVocab;
use crate::tokenizer::{SpecialIds, TokenId};

fn random_base_token<R: Rng + ?Sized>(base_size: usize, special: &SpecialIds, rng: &mut R) -> TokenId {
    loop {
        let t = rng.random_range(0..base_size) as TokenId;
        if !special.contains(t) {
            return t;
        }
    }
}

/// Corrupt `tokens` at the selected units.
///
/// Word and span positions become `[MASK]`, a uniform non-special base token,
/// or stay unchanged according to `policy.replace_split`; their labels are
/// the original ids. A phrase unit is replaced by a single `[MASK]` labelled
/// with the phrase's augmented id.
pub fn apply_masking<R: Rng + ?Sized>(
    tokens: &[TokenId],
    units: &[MaskUnit],
    vocab: &AugmentedVocab,
    policy: &MaskingPolicy,
    special: &SpecialIds,
    rng: &mut R,
) -> Result<MaskedExample> {
    let mut sorted = units.to_vec();
    sorted.sort_by_key(|u| u.start);
    for w in sorted.windows(2) {
        if w[0].end > w[1].start {
            return Err(Error::contract(format!(
                "selections [{}, {}) and [{}, {}) overlap",
                w[0].start, w[0].end, w[1].start, w[1].end
            )));
        }
    }
    // every unit needs a boundary token on both sides
    if let Some(u) = sorted
        .iter()
        .find(|u| u.is_empty() || u.start == 0 || u.end >= tokens.len())
    {
        return Err(Error::contract(format!(
            "selection [{}, {}) out of range for sequence of length {}",
            u.start,
            u.end,
            tokens.len()
        )));
    }
    let split = policy.replace_split;
    let base = vocab.base_size();
    let collapsed: usize = sorted
        .iter()
        .filter(|u| u.kind == SpanKind::FinancialPhrase)
        .map(|u| u.len() - 1)
        .sum();
    let out_len = tokens.len() - collapsed;
    let mut input_ids = Vec::with_capacity(out_len);
    let mut labels = Vec::with_capacity(out_len);
    let mut replaced_flags = Vec::with_capacity(out_len);
    let mut spans = Vec::with_capacity(sorted.len());
    let mut next = 0;
    for unit in &sorted {
        for &t in &tokens[next..unit.start] {
            input_ids.push(t);
            labels.push(IGNORE_LABEL);
            replaced_flags.push(0);
        }
        let start = input_ids.len();
        if unit.kind == SpanKind::FinancialPhrase {
            let term = unit
                .term_id
                .ok_or_else(|| Error::contract("phrase selection without a term id"))?;
            let id = vocab
                .phrase_id(term)
                .ok_or_else(|| Error::contract(format!("term {term} has no phrase id")))?;
            input_ids.push(special.mask);
            labels.push(i64::from(id));
            replaced_flags.push(1);
        } else {
            for &t in &tokens[unit.start..unit.end] {
                let u: f64 = rng.random();
                let corrupted = if u < split.mask {
                    special.mask
                } else if u < split.mask + split.random {
                    random_base_token(base, special, rng)
                } else {
                    t
                };
                input_ids.push(corrupted);
                labels.push(i64::from(t));
                replaced_flags.push(1);
            }
        }
        let end = input_ids.len();
        spans.push(SpanRecord {
            start,
            end,
            left_boundary: start - 1,
            right_boundary: end,
            source_start: unit.start,
            source_end: unit.end,
            target_ids: tokens[unit.start..unit.end].to_vec(),
            kind: unit.kind,
        });
        next = unit.end;
    }
    for &t in &tokens[next..] {
        input_ids.push(t);
        labels.push(IGNORE_LABEL);
        replaced_flags.push(0);
    }
    debug_assert_eq!(input_ids.len(), out_len);
    Ok(MaskedExample {
        input_ids,
        labels,
        spans,
        replaced_flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::ReplaceSplit;
    use crate::rng::rng_from_seed;

    const SPECIAL: SpecialIds = SpecialIds { pad: 0, unk: 1, cls: 2, sep: 3, mask: 4 };

    fn vocab_with_phrase() -> AugmentedVocab {
        use crate::lexicon::Lexicon;
        use crate::tokenizer::Tokenizer;
        let tok = Tokenizer::whole_word_vocab(["margin call happened today"]);
        let lex = Lexicon::from_surfaces(["margin call"], &tok, String::new()).unwrap();
        lex.augment()
    }

    fn word(i: usize) -> MaskUnit {
        MaskUnit { start: i, end: i + 1, kind: SpanKind::RandomWord, term_id: None }
    }

    #[test]
    fn deterministic_mask_split() {
        let vocab = vocab_with_phrase();
        let policy = MaskingPolicy {
            replace_split: ReplaceSplit { mask: 1.0, random: 0.0, keep: 0.0 },
            ..Default::default()
        };
        let tokens = [2, 5, 6, 7, 3];
        let ex = apply_masking(&tokens, &[word(2)], &vocab, &policy, &SPECIAL, &mut rng_from_seed(0)).unwrap();
        assert_eq!(ex.input_ids, vec![2, 5, 4, 7, 3]);
        assert_eq!(ex.labels, vec![IGNORE_LABEL, IGNORE_LABEL, 6, IGNORE_LABEL, IGNORE_LABEL]);
        assert_eq!(ex.replaced_flags, vec![0, 0, 1, 0, 0]);
        assert_eq!(ex.spans[0].left_boundary, 1);
        assert_eq!(ex.spans[0].right_boundary, 3);
    }

    #[test]
    fn phrase_collapses_to_one_mask() {
        let vocab = vocab_with_phrase();
        let phrase_id = vocab.phrase_id(0).unwrap();
        let tokens = [2, 9, 5, 6, 7, 3];
        let unit = MaskUnit { start: 2, end: 4, kind: SpanKind::FinancialPhrase, term_id: Some(0) };
        let ex = apply_masking(&tokens, &[unit, word(4)], &vocab, &MaskingPolicy::default(), &SPECIAL, &mut rng_from_seed(0)).unwrap();
        assert_eq!(ex.len(), tokens.len() - 1);
        assert_eq!(ex.input_ids[2], SPECIAL.mask);
        assert_eq!(ex.labels[2], i64::from(phrase_id));
        let s = &ex.spans[0];
        assert_eq!((s.start, s.end, s.left_boundary, s.right_boundary), (2, 3, 1, 3));
        assert_eq!((s.source_start, s.source_end), (2, 4));
        assert_eq!(s.target_ids, vec![5, 6]);
        // the word after the phrase shifts left by one
        assert_eq!((ex.spans[1].start, ex.spans[1].source_start), (3, 4));
        assert_eq!(ex.labels[3], 7);
        assert_eq!(ex.reconstruct(), tokens.to_vec());
    }

    #[test]
    fn empty_selection_is_identity() {
        let vocab = vocab_with_phrase();
        let tokens = [2, 5, 6, 3];
        let ex = apply_masking(&tokens, &[], &vocab, &MaskingPolicy::default(), &SPECIAL, &mut rng_from_seed(0)).unwrap();
        assert_eq!(ex.input_ids, tokens.to_vec());
        assert!(ex.labels.iter().all(|&l| l == IGNORE_LABEL));
        assert!(ex.spans.is_empty());
    }

    #[test]
    fn out_of_range_and_overlap_rejected() {
        let vocab = vocab_with_phrase();
        let tokens = [2, 5, 6, 3];
        let p = MaskingPolicy::default();
        let err = apply_masking(&tokens, &[word(9)], &vocab, &p, &SPECIAL, &mut rng_from_seed(0));
        assert!(matches!(err, Err(Error::Contract(_))));
        let wide = MaskUnit { start: 1, end: 3, kind: SpanKind::GeometricSpan, term_id: None };
        let err = apply_masking(&tokens, &[wide, word(2)], &vocab, &p, &SPECIAL, &mut rng_from_seed(0));
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn replace_split_frequencies() {
        let vocab = vocab_with_phrase();
        let tokens = [2, 5, 3];
        let p = MaskingPolicy::default();
        let mut rng = rng_from_seed(11);
        let (mut masked, mut kept) = (0, 0);
        let trials = 20_000;
        for _ in 0..trials {
            let ex = apply_masking(&tokens, &[word(1)], &vocab, &p, &SPECIAL, &mut rng).unwrap();
            match ex.input_ids[1] {
                4 => masked += 1,
                5 => kept += 1,
                t => assert!(!SPECIAL.contains(t) && (t as usize) < vocab.base_size()),
            }
        }
        // a random draw can also hit the original token
        let share = |c: i32| c as f64 / trials as f64;
        assert!((share(masked) - 0.8).abs() < 0.01);
        assert!(share(kept) > 0.09 && share(kept) < 0.13);
    }
}
