//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use finlm::lexicon::PhraseOccurrence;
use finlm::linalg::Matrix;
use finlm::tokenizer::TokenId;

/// Leftmost-longest scan that tries every pattern at every position.
pub fn brute_force_matches(tokens: &[TokenId], patterns: &BTreeMap<Vec<TokenId>, u32>) -> Vec<PhraseOccurrence> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut best: Option<(usize, u32)> = None;
        for (p, &id) in patterns {
            if i + p.len() <= tokens.len() && tokens[i..i + p.len()] == p[..] && best.is_none_or(|(l, _)| p.len() > l) {
                best = Some((p.len(), id));
            }
        }
        match best {
            Some((len, term_id)) => {
                out.push(PhraseOccurrence { start: i, end: i + len, term_id });
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

/// Brute force over every (i, j, k) triple.
pub fn scl_triple_loop(f: &Matrix, labels: &[usize], tau: f64) -> f64 {
    let n = f.rows();
    let sim = |a: usize, b: usize| {
        let mut s = 0.0;
        for c in 0..f.cols() {
            s += f.get(a, c) * f.get(b, c);
        }
        s / tau
    };
    let mut total = 0.0;
    for i in 0..n {
        let n_yi = labels.iter().filter(|&&l| l == labels[i]).count();
        if n_yi < 2 {
            continue;
        }
        let mut inner = 0.0;
        for j in 0..n {
            if j == i || labels[j] != labels[i] {
                continue;
            }
            let mut denom = 0.0;
            for k in 0..n {
                if k != i {
                    denom += sim(i, k).exp();
                }
            }
            inner += (sim(i, j).exp() / denom).ln();
        }
        total += -inner / (n_yi - 1) as f64;
    }
    total
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn dcg_loop(grades: &[f64], k: usize) -> f64 {
    let mut s = 0.0;
    for r in 1..=k.min(grades.len()) {
        s += (2f64.powf(grades[r - 1]) - 1.0) / ((r + 1) as f64).ln() * 2f64.ln();
    }
    s
}

/// nDCG with the ideal found by trying every ordering of the judged grades.
pub fn ndcg_by_enumeration(ranked: &[f64], judged: &[f64], k: usize) -> f64 {
    let mut best = 0.0f64;
    for p in permutations(judged.len()) {
        let g: Vec<f64> = p.iter().map(|&i| judged[i]).collect();
        best = best.max(dcg_loop(&g, k));
    }
    if best == 0.0 {
        0.0
    } else {
        dcg_loop(ranked, k) / best
    }
}

pub fn mrr_loop(rankings: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for r in rankings {
        for (i, g) in r.iter().enumerate() {
            if *g > 0.0 {
                total += 1.0 / (i + 1) as f64;
                break;
            }
        }
    }
    total / rankings.len() as f64
}

pub fn precision_loop(ranked: &[f64], k: usize) -> f64 {
    let mut hits = 0;
    for i in 0..k {
        if i < ranked.len() && ranked[i] > 0.0 {
            hits += 1;
        }
    }
    hits as f64 / k as f64
}

/// Per-class F1 from a full confusion matrix.
pub fn f1_confusion(preds: &[usize], labels: &[usize], classes: usize) -> Vec<f64> {
    let mut cm = vec![vec![0usize; classes]; classes];
    for (&p, &l) in preds.iter().zip(labels) {
        cm[l][p] += 1;
    }
    (0..classes)
        .map(|c| {
            let tp = cm[c][c] as f64;
            let predicted: usize = (0..classes).map(|l| cm[l][c]).sum();
            let actual: usize = cm[c].iter().sum();
            if predicted + actual == 0 {
                0.0
            } else {
                2.0 * tp / (predicted + actual) as f64
            }
        })
        .collect()
}

pub fn mse_r2_loop(p: &[f64], t: &[f64]) -> (f64, Option<f64>) {
    let n = t.len() as f64;
    let mut res = 0.0;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for i in 0..t.len() {
        res += (p[i] - t[i]).powi(2);
        sum += t[i];
        sum_sq += t[i] * t[i];
    }
    let tot = sum_sq - sum * sum / n;
    let r2 = if tot.abs() < 1e-12 { None } else { Some(1.0 - res / tot) };
    (res / n, r2)
}
