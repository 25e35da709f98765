//! Built-in gradient checks, statistical checks on the masking sampler, and
//! metric oracles, run by the `selftest` command.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::lexicon::Lexicon;
use crate::linalg::{softmax, Matrix};
use crate::masking::{mask_batch, masking_stats, Masker, MaskingPolicy, Stage, TruncatedGeometric};
use crate::metrics::{accuracy, f1_scores, mrr, mse_r2, ndcg, precision_at_k, RankedList};
use crate::objectives::sbo::{sbo_backward, sbo_forward};
use crate::objectives::*;
use crate::rng::{rng_from_seed, ChaCha8Rng};
use crate::tokenizer::{TokenId, Tokenizer};

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
/// Chi-square critical value at alpha = 0.01 with 9 degrees of freedom.
pub const CHI2_CRITICAL_9: f64 = 21.665_994_333_461_924;

#[derive(Debug, Clone, Default)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Corrupt one coordinate of the MLM gradient, to see the suite fail.
    pub inject_wrong_gradient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub group: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn render_table(&self) -> String {
        let gw = self.checks.iter().map(|c| c.group.len()).max().unwrap_or(0);
        let nw = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let verdict = if c.passed { "pass" } else { "FAIL" };
            writeln!(out, "{verdict}  {:gw$}  {:nw$}  {}", c.group, c.name, c.detail).unwrap();
        }
        writeln!(out, "{} checks, {} failed", self.checks.len(), self.failures()).unwrap();
        out
    }
}

struct Suite {
    checks: Vec<CheckResult>,
    rng: ChaCha8Rng,
}

impl Suite {
    fn push(&mut self, group: &'static str, name: &str, passed: bool, detail: String) {
        self.checks.push(CheckResult {
            group,
            name: name.to_string(),
            passed,
            detail,
        });
    }

    fn grad(&mut self, name: &str, report: GradCheck) {
        let passed = report.passes(GRAD_TOL);
        let detail = format!("max rel error {:.2e} over {} coordinates", report.max_rel_error, report.coordinates);
        self.push("gradient", name, passed, detail);
    }

    fn close(&mut self, group: &'static str, name: &str, got: f64, want: f64, tol: f64) {
        let passed = (got - want).abs() <= tol;
        self.push(group, name, passed, format!("{got:.12} vs {want:.12}"));
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::random(rows, cols, 1.0, &mut self.rng)
    }
}

pub fn run_selftest(options: &SelftestOptions) -> SelftestReport {
    let mut s = Suite {
        checks: Vec::new(),
        rng: rng_from_seed(options.seed),
    };
    gradients(&mut s, options.inject_wrong_gradient);
    contrastive_oracle(&mut s);
    masking(&mut s);
    metrics(&mut s);
    SelftestReport { checks: s.checks }
}

fn flat_sbo(p: &SboParams) -> Vec<f64> {
    p.tensors().into_iter().flat_map(|(_, t)| t.to_vec()).collect()
}

fn unflat_sbo(p: &mut SboParams, x: &[f64]) {
    let mut at = 0;
    for (_, t) in p.tensors_mut() {
        t.copy_from_slice(&x[at..at + t.len()]);
        at += t.len();
    }
}

fn unit_rows(m: &mut Matrix) {
    for r in 0..m.rows() {
        let norm = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        m.row_mut(r).iter_mut().for_each(|v| *v /= norm);
    }
}

fn gradients(s: &mut Suite, inject: bool) {
    let logits = s.matrix(4, 9);
    let labels = [1, 8, 0, 3];
    let (_, mut g) = mlm_loss(&logits, &labels).unwrap();
    if inject {
        g.data_mut()[0] += 1e-3;
    }
    let f = |x: &[f64]| mlm_loss(&Matrix::from_vec(4, 9, x.to_vec()), &labels).unwrap().0;
    s.grad("mlm logits", grad_check(f, logits.data(), g.data(), GRAD_STEP));

    let (d, v) = (4, 11);
    let params = SboParams::init(d, 5, 3, 10, &mut s.rng);
    let states = s.matrix(8, d);
    let emb = s.matrix(v, d);
    let targets = [
        SboTarget { left: 1, right: 4, span_pos: 1, target: 3 },
        SboTarget { left: 1, right: 4, span_pos: 2, target: 7 },
        SboTarget { left: 4, right: 6, span_pos: 1, target: 10 },
    ];
    let out = sbo_loss(&targets, &states, &params, &emb).unwrap();
    let f = |x: &[f64]| {
        let mut p = params.clone();
        unflat_sbo(&mut p, x);
        sbo_loss(&targets, &states, &p, &emb).unwrap().loss
    };
    s.grad("sbo parameters", grad_check(f, &flat_sbo(&params), &flat_sbo(&out.grads.params), GRAD_STEP));
    let f = |x: &[f64]| sbo_loss(&targets, &Matrix::from_vec(8, d, x.to_vec()), &params, &emb).unwrap().loss;
    s.grad("sbo boundary states", grad_check(f, states.data(), out.grads.states.data(), GRAD_STEP));
    let f = |x: &[f64]| sbo_loss(&targets, &states, &params, &Matrix::from_vec(v, d, x.to_vec())).unwrap().loss;
    s.grad("sbo output embedding", grad_check(f, emb.data(), out.grads.embedding.data(), GRAD_STEP));

    // f(.) alone under a random linear readout
    let left: Vec<f64> = s.matrix(1, d).data().to_vec();
    let right: Vec<f64> = s.matrix(1, d).data().to_vec();
    let w: Vec<f64> = s.matrix(1, d).data().to_vec();
    let readout = |y: &[f64]| y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let (_, cache) = sbo_forward(&left, &right, 2, &params).unwrap();
    let mut gp = params.zeros_like();
    let (dl, dr) = sbo_backward(&w, &cache, &params, &mut gp);
    let mut lr = left.clone();
    lr.extend(&right);
    let mut dlr = dl;
    dlr.extend(dr);
    let f = |x: &[f64]| readout(&sbo_representation(&x[..d], &x[d..], 2, &params).unwrap());
    s.grad("sbo f(.) inputs", grad_check(f, &lr, &dlr, GRAD_STEP));
    let f = |x: &[f64]| {
        let mut p = params.clone();
        unflat_sbo(&mut p, x);
        readout(&sbo_representation(&left, &right, 2, &p).unwrap())
    };
    s.grad("sbo f(.) parameters", grad_check(f, &flat_sbo(&params), &flat_sbo(&gp), GRAD_STEP));

    let probs: Vec<f64> = (0..8).map(|_| s.rng.random_range(0.05..0.95)).collect();
    let flags: Vec<bool> = (0..8).map(|i| i % 3 == 0).collect();
    let (_, g) = disc_loss(&probs, &flags).unwrap();
    s.grad("disc probabilities", grad_check(|x| disc_loss(x, &flags).unwrap().0, &probs, &g, GRAD_STEP));
    let z: Vec<f64> = (0..8).map(|_| s.rng.random_range(-3.0..3.0)).collect();
    let (_, g) = disc_loss_logits(&z, &flags).unwrap();
    s.grad("disc logits", grad_check(|x| disc_loss_logits(x, &flags).unwrap().0, &z, &g, GRAD_STEP));

    let z = s.matrix(4, 3);
    let labels = [2, 0, 1, 2];
    let (_, g) = ce_loss_logits(&z, &labels).unwrap();
    let f = |x: &[f64]| ce_loss_logits(&Matrix::from_vec(4, 3, x.to_vec()), &labels).unwrap().0;
    s.grad("ce logits", grad_check(f, z.data(), g.data(), GRAD_STEP));
    let to_probs = |x: &[f64]| Matrix::from_rows(&x.chunks(3).map(softmax).collect::<Vec<_>>());
    let probs = to_probs(z.data());
    let (_, gp) = ce_loss(&probs, &labels).unwrap();
    let mut chained = Vec::new();
    for r in 0..4 {
        let (p, g) = (probs.row(r), gp.row(r));
        let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        chained.extend(p.iter().zip(g).map(|(pc, gc)| pc * (gc - inner)));
    }
    let f = |x: &[f64]| ce_loss(&to_probs(x), &labels).unwrap().0;
    s.grad("ce probabilities", grad_check(f, z.data(), &chained, GRAD_STEP));

    let mut feats = s.matrix(6, 4);
    unit_rows(&mut feats);
    let labels = [0, 1, 0, 2, 1, 0];
    let out = scl_loss(&feats, &labels, 0.5).unwrap();
    let f = |x: &[f64]| scl_loss(&Matrix::from_vec(6, 4, x.to_vec()), &labels, 0.5).unwrap().loss;
    s.grad("scl features", grad_check(f, feats.data(), out.grad.data(), GRAD_STEP));

    let x: Vec<f64> = (0..6).map(|_| s.rng.random_range(-2.0..2.0)).collect();
    let ln = LayerNorm {
        gain: (0..6).map(|_| s.rng.random_range(0.5..1.5)).collect(),
        bias: (0..6).map(|_| s.rng.random_range(-0.5..0.5)).collect(),
    };
    let w: Vec<f64> = (0..6).map(|_| s.rng.random_range(-1.0..1.0)).collect();
    let (_, cache) = ln.forward(&x);
    let dx = ln.backward(&w, &cache, &mut LayerNorm::zeros(6));
    let f = |x: &[f64]| ln.forward(x).0.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    s.grad("layer norm inputs", grad_check(f, &x, &dx, GRAD_STEP));

    let xs: Vec<f64> = (0..41).map(|i| -4.0 + 0.2 * i as f64).collect();
    let gx: Vec<f64> = xs.iter().map(|&x| gelu_grad(x)).collect();
    let f = |x: &[f64]| x.iter().map(|&v| gelu(v)).sum::<f64>();
    s.grad("gelu", grad_check(f, &xs, &gx, GRAD_STEP));
}

fn scl_loops(f: &Matrix, labels: &[usize], tau: f64) -> f64 {
    let n = f.rows();
    let sim = |a: usize, b: usize| (0..f.cols()).map(|c| f.get(a, c) * f.get(b, c)).sum::<f64>() / tau;
    let mut total = 0.0;
    for i in 0..n {
        let positives = (0..n).filter(|&j| j != i && labels[j] == labels[i]).count();
        if positives == 0 {
            continue;
        }
        for j in (0..n).filter(|&j| j != i && labels[j] == labels[i]) {
            let denom: f64 = (0..n).filter(|&k| k != i).map(|k| sim(i, k).exp()).sum();
            total -= (sim(i, j).exp() / denom).ln() / positives as f64;
        }
    }
    total
}

fn contrastive_oracle(s: &mut Suite) {
    let mut worst: f64 = 0.0;
    for n in 2..=8 {
        let mut f = s.matrix(n, 5);
        unit_rows(&mut f);
        let labels: Vec<usize> = (0..n).map(|_| s.rng.random_range(0..3)).collect();
        let got = scl_loss(&f, &labels, 0.7).unwrap().loss;
        worst = worst.max((got - scl_loops(&f, &labels, 0.7)).abs());
    }
    s.push("oracle", "scl vs triple loop", worst <= 1e-10, format!("max difference {worst:.2e}"));
}

/// Leftmost-longest match by trying every pattern at every position.
fn brute_force(tokens: &[TokenId], patterns: &BTreeMap<Vec<TokenId>, u32>) -> Vec<(usize, usize, u32)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let best = patterns
            .iter()
            .filter(|(p, _)| tokens[i..].starts_with(p))
            .max_by_key(|(p, _)| p.len());
        match best {
            Some((p, &id)) => {
                out.push((i, i + p.len(), id));
                i += p.len();
            }
            None => i += 1,
        }
    }
    out
}

fn masking(s: &mut Suite) {
    let words: Vec<String> = (0..100).map(|i| format!("t{i}")).collect();
    let tokenizer = Tokenizer::whole_word_vocab(words.iter().map(String::as_str));
    let mut dictionary: Vec<String> = (0..20).map(|i| format!("t{i}")).collect();
    dictionary.extend(["t20 t21", "t22 t23 t24", "t21 t20", "t25 t26"].map(String::from));
    let lexicon = Lexicon::from_surfaces(dictionary.iter(), &tokenizer, "selftest".into()).unwrap();
    let special = tokenizer.special();
    let id = |i: usize| tokenizer.id(&format!("t{i}")).unwrap();

    let seqs: Vec<Vec<TokenId>> = (0..1000)
        .map(|_| {
            let len = s.rng.random_range(50..300);
            let mut ids = vec![special.cls];
            ids.extend((0..len).map(|_| id(s.rng.random_range(0..100))));
            ids.push(special.sep);
            ids
        })
        .collect();
    let masker = Masker::new(lexicon.clone(), MaskingPolicy::default()).unwrap();
    let records = mask_batch(&masker, &seqs, Stage::WordOnly, 1);
    let stats = masking_stats(records.iter().filter_map(|r| r.example()), &special);
    s.close("masking", "mask rate", stats.mask_rate, 0.15, 0.003);
    s.close("masking", "financial share", stats.financial_share, 0.30, 0.01);

    let phrase_rich: Vec<Vec<TokenId>> = (0..200)
        .map(|_| {
            let mut ids = vec![special.cls];
            for _ in 0..20 {
                ids.extend([id(20), id(21), id(s.rng.random_range(30..100))]);
            }
            ids.push(special.sep);
            ids
        })
        .collect();
    let collapses: usize = mask_batch(&masker, &phrase_rich, Stage::WordOnly, 2)
        .iter()
        .filter_map(|r| r.example())
        .map(|e| e.phrase_collapses())
        .sum();
    s.push("masking", "word-only stage collapses", collapses == 0, format!("{collapses} collapses"));

    let d = TruncatedGeometric::new(0.2, 10).unwrap();
    let draws = 200_000;
    let mut counts = [0u64; 11];
    for _ in 0..draws {
        counts[d.sample(&mut s.rng)] += 1;
    }
    let mean = (1..=10).map(|l| (l as u64 * counts[l]) as f64).sum::<f64>() / draws as f64;
    s.close("masking", "span length mean", mean, 3.797_097_5, 0.05);
    let chi2: f64 = (1..=10)
        .map(|l| {
            let e = draws as f64 * d.pmf(l);
            (counts[l] as f64 - e).powi(2) / e
        })
        .sum();
    s.push("masking", "span length chi-square", chi2 < CHI2_CRITICAL_9, format!("{chi2:.3} < {CHI2_CRITICAL_9:.3}"));

    let patterns: BTreeMap<Vec<TokenId>, u32> = lexicon
        .terms()
        .iter()
        .map(|t| (t.token_ids.clone(), t.term_id))
        .collect();
    let mut mismatches = 0;
    for _ in 0..300 {
        let len = s.rng.random_range(0..200);
        let seq: Vec<TokenId> = (0..len).map(|_| id(s.rng.random_range(18..28))).collect();
        let got: Vec<_> = lexicon.find_occurrences(&seq).iter().map(|o| (o.start, o.end, o.term_id)).collect();
        if got != brute_force(&seq, &patterns) {
            mismatches += 1;
        }
    }
    s.push("masking", "phrase matcher vs brute force", mismatches == 0, format!("{mismatches} of 300 sequences differ"));
}

fn metrics(s: &mut Suite) {
    let rel: BTreeMap<String, f64> = [("a", 0.0), ("b", 1.0), ("c", 2.0)].map(|(k, g)| (k.to_string(), g)).into();
    let list = |docs: &[&str]| RankedList::new("q", docs.iter().map(|d| d.to_string()).collect(), rel.clone()).unwrap();
    // grades (2, 0, 1): DCG = 3 + 1/log2(4), ideal (2, 1, 0): 3 + 1/log2(3)
    let want = (3.0 + 0.5) / (3.0 + 1.0 / 3f64.log2());
    s.close("metrics", "ndcg of grades (2,0,1)", ndcg(&list(&["c", "a", "b"]), Some(3)).unwrap(), want, 1e-12);
    s.close("metrics", "ndcg of the ideal order", ndcg(&list(&["c", "b", "a"]), Some(3)).unwrap(), 1.0, 0.0);
    let two = [list(&["b", "a"]), list(&["a", "c"])];
    s.close("metrics", "mrr of ranks 1 and 2", mrr(&two, 0.0).unwrap(), 0.75, 1e-15);
    s.close("metrics", "precision@2", precision_at_k(&list(&["a", "b", "c"]), 2, 0.0).unwrap(), 0.5, 1e-15);
    s.close("metrics", "accuracy 3 of 4", accuracy(&[1, 0, 1, 1], &[1, 0, 0, 1]).unwrap(), 0.75, 0.0);
    // class 0: tp 1, fp 2, fn 1 -> 2/5; class 1: tp 2, fp 1, fn 1 -> 2/3; class 2: 0
    let f1 = f1_scores(&[1, 1, 0, 1, 0, 0], &[1, 0, 0, 1, 1, 2], &[0, 1, 2]).unwrap();
    s.close("metrics", "macro f1 by hand", f1.macro_f1, (0.4 + 2.0 / 3.0) / 3.0, 1e-12);
    let (mse, r2) = mse_r2(&[2.5, 2.5, 2.5, 2.5], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    s.close("metrics", "mse at the mean", mse, 1.25, 1e-15);
    s.close("metrics", "r2 at the mean", r2.unwrap_or(f64::NAN), 0.0, 1e-15);
}
