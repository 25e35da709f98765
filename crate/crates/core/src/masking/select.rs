use rand::seq::index;
use rand::Rng;

use super::spans::{eligible, place_spans, TruncatedGeometric};
use super::{MaskUnit, MaskingPolicy, SpanKind, Stage};
use crate::error::{Error, Result};
use crate::lexicon::PhraseOccurrence;
use crate::tokenizer::{SpecialIds, TokenId};

/// Word-level mask positions, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordSelection {
    pub financial: Vec<usize>,
    pub other: Vec<usize>,
}

impl WordSelection {
    pub fn len(&self) -> usize {
        self.financial.len() + self.other.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `round(total_rate * n)` over the non-special tokens; zero when fewer than
/// three are selectable.
pub(crate) fn word_budget(tokens: &[TokenId], special: &SpecialIds, policy: &MaskingPolicy) -> usize {
    let n = tokens.iter().filter(|&&t| !special.contains(t)).count();
    let selectable = eligible(tokens, special).iter().filter(|&&e| e).count();
    if n < 3 || selectable == 0 {
        return 0;
    }
    (policy.total_rate * n as f64).round() as usize
}

fn single_word_positions(n: usize, occurrences: &[PhraseOccurrence]) -> Vec<bool> {
    let mut fin = vec![false; n];
    for occ in occurrences.iter().filter(|o| o.len() == 1) {
        fin[occ.start] = true;
    }
    fin
}

fn draw<R: Rng + ?Sized>(candidates: &[usize], amount: usize, rng: &mut R) -> Vec<usize> {
    let amount = amount.min(candidates.len());
    let mut picked: Vec<usize> = index::sample(rng, candidates.len(), amount)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    picked
}

fn positions(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

struct Split {
    financial: Vec<usize>,
    rest: usize,
    /// Pool for the remaining budget.
    pool: Vec<bool>,
    /// Any still-free eligible position, for the last-resort fill.
    fallback: Vec<bool>,
}

fn split_budget<R: Rng + ?Sized>(
    tokens: &[TokenId],
    occurrences: &[PhraseOccurrence],
    policy: &MaskingPolicy,
    special: &SpecialIds,
    blocked: &[bool],
    rng: &mut R,
) -> Split {
    let n = tokens.len();
    let budget = word_budget(tokens, special, policy);
    let free: Vec<bool> = eligible(tokens, special)
        .into_iter()
        .zip(blocked)
        .map(|(e, &b)| e && !b)
        .collect();
    if policy.fin_share == 0.0 {
        // Plain uniform masking: the lexicon plays no role.
        return Split {
            financial: Vec::new(),
            rest: budget,
            pool: free.clone(),
            fallback: free,
        };
    }
    let fin_mask = single_word_positions(n, occurrences);
    let fin_candidates: Vec<usize> = (0..n).filter(|&i| free[i] && fin_mask[i]).collect();
    let fin_target = (policy.fin_share * budget as f64).round() as usize;
    let financial = draw(&fin_candidates, fin_target, rng);
    let mut fallback = free.clone();
    for &i in &financial {
        fallback[i] = false;
    }
    let pool: Vec<bool> = (0..n).map(|i| free[i] && !fin_mask[i]).collect();
    Split {
        rest: budget - financial.len(),
        financial,
        pool,
        fallback,
    }
}

/// Budget-split word selection with single-position draws for the
/// non-financial share.
pub fn select_word_masks<R: Rng + ?Sized>(
    tokens: &[TokenId],
    occurrences: &[PhraseOccurrence],
    policy: &MaskingPolicy,
    special: &SpecialIds,
    rng: &mut R,
) -> WordSelection {
    let blocked = vec![false; tokens.len()];
    select_words_excluding(tokens, occurrences, policy, special, &blocked, rng)
}

fn select_words_excluding<R: Rng + ?Sized>(
    tokens: &[TokenId],
    occurrences: &[PhraseOccurrence],
    policy: &MaskingPolicy,
    special: &SpecialIds,
    blocked: &[bool],
    rng: &mut R,
) -> WordSelection {
    let split = split_budget(tokens, occurrences, policy, special, blocked, rng);
    let mut other = draw(&positions(&split.pool), split.rest, rng);
    if other.len() < split.rest {
        let mut fallback = split.fallback;
        for &i in &other {
            fallback[i] = false;
        }
        other.extend(draw(&positions(&fallback), split.rest - other.len(), rng));
        other.sort_unstable();
    }
    WordSelection {
        financial: split.financial,
        other,
    }
}

/// Each interior phrase occurrence independently with probability
/// `phrase_rate`. Empty in the word-only stage.
pub fn select_phrase_masks<R: Rng + ?Sized>(
    tokens: &[TokenId],
    occurrences: &[PhraseOccurrence],
    policy: &MaskingPolicy,
    rng: &mut R,
) -> Vec<MaskUnit> {
    if policy.stage != Stage::WordAndPhrase || policy.phrase_rate == 0.0 {
        return Vec::new();
    }
    let n = tokens.len();
    let mut out = Vec::new();
    for occ in occurrences.iter().filter(|o| o.len() >= 2) {
        if occ.start == 0 || occ.end >= n {
            continue;
        }
        if rng.random_bool(policy.phrase_rate) {
            out.push(MaskUnit {
                start: occ.start,
                end: occ.end,
                kind: SpanKind::FinancialPhrase,
                term_id: Some(occ.term_id),
            });
        }
    }
    out
}

/// The full selection for one sequence: phrases (by stage), the financial
/// word share, and the remainder as geometric spans or single positions.
pub fn select_all<R: Rng + ?Sized>(
    tokens: &[TokenId],
    occurrences: &[PhraseOccurrence],
    policy: &MaskingPolicy,
    special: &SpecialIds,
    rng: &mut R,
) -> Result<Vec<MaskUnit>> {
    let n = tokens.len();
    for w in occurrences.windows(2) {
        if w[0].end > w[1].start {
            return Err(Error::contract("overlapping occurrences"));
        }
    }
    if occurrences.last().is_some_and(|o| o.end > n) {
        return Err(Error::contract("occurrence past end of sequence"));
    }
    let mut units = select_phrase_masks(tokens, occurrences, policy, rng);
    let mut blocked = vec![false; n];
    for u in &units {
        blocked[u.start..u.end].iter_mut().for_each(|b| *b = true);
    }
    let unit = |i: usize, kind| MaskUnit {
        start: i,
        end: i + 1,
        kind,
        term_id: None,
    };
    if policy.spans {
        let dist = TruncatedGeometric::from_policy(policy)?;
        let split = split_budget(tokens, occurrences, policy, special, &blocked, rng);
        let mut pool = split.pool;
        let spans = place_spans(&mut pool, split.rest, &dist, rng);
        let covered: usize = spans.iter().map(MaskUnit::len).sum();
        units.extend(split.financial.iter().map(|&i| unit(i, SpanKind::FinancialWord)));
        if covered < split.rest {
            let mut fallback = split.fallback;
            for s in &spans {
                fallback[s.start..s.end].iter_mut().for_each(|b| *b = false);
            }
            let extra = draw(&positions(&fallback), split.rest - covered, rng);
            units.extend(extra.into_iter().map(|i| unit(i, SpanKind::RandomWord)));
        }
        units.extend(spans);
    } else {
        let words = select_words_excluding(tokens, occurrences, policy, special, &blocked, rng);
        units.extend(words.financial.iter().map(|&i| unit(i, SpanKind::FinancialWord)));
        units.extend(words.other.iter().map(|&i| unit(i, SpanKind::RandomWord)));
    }
    units.sort_by_key(|u| u.start);
    Ok(units)
}
