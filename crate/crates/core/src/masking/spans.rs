use rand::Rng;

use super::{MaskUnit, MaskingPolicy, SpanKind};
use crate::error::{Error, Result};
use crate::tokenizer::{SpecialIds, TokenId};

/// Geometric span length on `{1, 2, ...}` with success probability `p`,
/// conditioned on `length <= max` (renormalized, not clipped).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedGeometric {
    p: f64,
    max: usize,
    /// `1 - (1-p)^max`, the untruncated mass of the support.
    mass: f64,
}

impl TruncatedGeometric {
    pub fn new(p: f64, max: usize) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) || max == 0 {
            return Err(Error::Config(format!("invalid span distribution p={p}, max={max}")));
        }
        let mass = 1.0 - (1.0 - p).powi(max as i32);
        Ok(TruncatedGeometric { p, max, mass })
    }

    pub fn from_policy(policy: &MaskingPolicy) -> Result<Self> {
        Self::new(policy.geo_p, policy.max_span)
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn pmf(&self, len: usize) -> f64 {
        if len == 0 || len > self.max {
            return 0.0;
        }
        self.p * (1.0 - self.p).powi(len as i32 - 1) / self.mass
    }

    /// Inverse-CDF draw: the smallest `l` with `(1 - q^l) / mass >= u`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.p >= 1.0 {
            return 1;
        }
        let u: f64 = rng.random();
        let q = 1.0 - self.p;
        let l = ((1.0 - u * self.mass).ln() / q.ln()).ceil();
        (l as usize).clamp(1, self.max)
    }
}

/// Cover `budget` positions of `pool` with non-overlapping spans.
///
/// Lengths are drawn from `dist` and cut to the remaining budget. A span is
/// placed uniformly among the starts whose next `len` positions are all in
/// the pool; when no start fits, the length shrinks to the longest free run.
/// Returns fewer positions than `budget` only when the pool runs dry.
pub(crate) fn place_spans<R: Rng + ?Sized>(
    pool: &mut [bool],
    budget: usize,
    dist: &TruncatedGeometric,
    rng: &mut R,
) -> Vec<MaskUnit> {
    let n = pool.len();
    let mut run = vec![0usize; n + 1];
    let mut spans = Vec::new();
    let mut remaining = budget;
    let mut starts = Vec::with_capacity(n);
    while remaining > 0 {
        // run[i]: number of consecutive pool positions starting at i
        for i in (0..n).rev() {
            run[i] = if pool[i] { run[i + 1] + 1 } else { 0 };
        }
        let longest = run[..n].iter().copied().max().unwrap_or(0);
        if longest == 0 {
            break;
        }
        let len = dist.sample(rng).min(remaining).min(longest);
        starts.clear();
        starts.extend((0..n).filter(|&i| run[i] >= len));
        let start = starts[rng.random_range(0..starts.len())];
        pool[start..start + len].iter_mut().for_each(|p| *p = false);
        spans.push(MaskUnit {
            start,
            end: start + len,
            kind: SpanKind::GeometricSpan,
            term_id: None,
        });
        remaining -= len;
    }
    spans.sort_by_key(|s| s.start);
    spans
}

/// Positions a mask may cover: not special, and not the first or last slot.
pub(crate) fn eligible(tokens: &[TokenId], special: &SpecialIds) -> Vec<bool> {
    let n = tokens.len();
    tokens
        .iter()
        .enumerate()
        .map(|(i, &t)| i > 0 && i + 1 < n && !special.contains(t))
        .collect()
}

/// Geometric spans covering `round(total_rate * n)` of the `n` non-special
/// tokens, with every span strictly inside the sequence.
pub fn sample_geometric_spans<R: Rng + ?Sized>(
    tokens: &[TokenId],
    policy: &MaskingPolicy,
    special: &SpecialIds,
    rng: &mut R,
) -> Result<Vec<MaskUnit>> {
    let dist = TruncatedGeometric::from_policy(policy)?;
    let mut pool = eligible(tokens, special);
    let budget = super::select::word_budget(tokens, special, policy);
    Ok(place_spans(&mut pool, budget, &dist, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn pmf_sums_to_one() {
        let d = TruncatedGeometric::new(0.2, 10).unwrap();
        let total: f64 = (1..=10).map(|l| d.pmf(l)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(d.pmf(0), 0.0);
        assert_eq!(d.pmf(11), 0.0);
    }

    #[test]
    fn degenerate_p_one_gives_unit_spans() {
        let d = TruncatedGeometric::new(1.0, 10).unwrap();
        let mut rng = rng_from_seed(1);
        assert!((0..1000).all(|_| d.sample(&mut rng) == 1));
    }

    #[test]
    fn sample_stays_in_support() {
        let d = TruncatedGeometric::new(0.05, 4).unwrap();
        let mut rng = rng_from_seed(2);
        let mut seen = [false; 5];
        for _ in 0..10_000 {
            let l = d.sample(&mut rng);
            assert!((1..=4).contains(&l));
            seen[l] = true;
        }
        assert!(seen[1..].iter().all(|&s| s));
    }

    #[test]
    fn length_three_sequence_has_one_legal_slot() {
        let special = SpecialIds { pad: 90, unk: 91, cls: 92, sep: 93, mask: 94 };
        let policy = MaskingPolicy { total_rate: 0.5, ..Default::default() };
        // enumerate: the only interior position is 1
        for seed in 0..200 {
            let spans = sample_geometric_spans(&[5, 6, 7], &policy, &special, &mut rng_from_seed(seed)).unwrap();
            assert!(spans.len() <= 1);
            for s in spans {
                assert_eq!((s.start, s.end), (1, 2));
            }
        }
    }

    #[test]
    fn placed_spans_are_disjoint_and_exact() {
        let d = TruncatedGeometric::new(0.2, 10).unwrap();
        let mut rng = rng_from_seed(3);
        for _ in 0..200 {
            let mut pool = vec![true; 120];
            pool[0] = false;
            pool[119] = false;
            let spans = place_spans(&mut pool, 18, &d, &mut rng);
            let covered: usize = spans.iter().map(MaskUnit::len).sum();
            assert_eq!(covered, 18);
            for w in spans.windows(2) {
                assert!(w[0].end <= w[1].start);
            }
            assert!(spans.iter().all(|s| s.start >= 1 && s.end <= 119));
        }
    }
}
