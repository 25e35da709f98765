//! Pre-LayerNorm transformer encoder with learned absolute positions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{tensor_name, Linear, Tensors};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::objectives::nn::{gelu, gelu_grad, LayerNormCache};
use crate::objectives::LayerNorm;
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Augmented vocabulary size; filled in from the lexicon when zero.
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 0,
            d_model: 64,
            n_heads: 2,
            n_layers: 2,
            ffn_dim: 128,
            max_len: 128,
            dropout: 0.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("encoder: {m}")));
        if self.vocab_size == 0 || self.d_model == 0 || self.n_layers == 0 || self.ffn_dim == 0 || self.max_len < 2 {
            return bad("sizes must be positive".into());
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.dropout != 0.0 {
            return bad("only dropout = 0 is supported".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl Tensors for Block {
    fn visit<'a>(&'a self, p: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.ln1.visit(&tensor_name(p, "ln1"), out);
        self.q.visit(&tensor_name(p, "q"), out);
        self.k.visit(&tensor_name(p, "k"), out);
        self.v.visit(&tensor_name(p, "v"), out);
        self.o.visit(&tensor_name(p, "o"), out);
        self.ln2.visit(&tensor_name(p, "ln2"), out);
        self.ff1.visit(&tensor_name(p, "ff1"), out);
        self.ff2.visit(&tensor_name(p, "ff2"), out);
    }
    fn visit_mut<'a>(&'a mut self, p: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.ln1.visit_mut(&tensor_name(p, "ln1"), out);
        self.q.visit_mut(&tensor_name(p, "q"), out);
        self.k.visit_mut(&tensor_name(p, "k"), out);
        self.v.visit_mut(&tensor_name(p, "v"), out);
        self.o.visit_mut(&tensor_name(p, "o"), out);
        self.ln2.visit_mut(&tensor_name(p, "ln2"), out);
        self.ff1.visit_mut(&tensor_name(p, "ff1"), out);
        self.ff2.visit_mut(&tensor_name(p, "ff2"), out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    /// `[vocab x d_model]`
    pub tok_emb: Matrix,
    /// `[max_len x d_model]`
    pub pos_emb: Matrix,
    pub blocks: Vec<Block>,
    pub ln_f: LayerNorm,
}

impl Tensors for Encoder {
    fn visit<'a>(&'a self, p: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.tok_emb.visit(&tensor_name(p, "tok_emb"), out);
        self.pos_emb.visit(&tensor_name(p, "pos_emb"), out);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&tensor_name(p, &format!("block{i}")), out);
        }
        self.ln_f.visit(&tensor_name(p, "ln_f"), out);
    }
    fn visit_mut<'a>(&'a mut self, p: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.tok_emb.visit_mut(&tensor_name(p, "tok_emb"), out);
        self.pos_emb.visit_mut(&tensor_name(p, "pos_emb"), out);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&tensor_name(p, &format!("block{i}")), out);
        }
        self.ln_f.visit_mut(&tensor_name(p, "ln_f"), out);
    }
}

struct BlockCache {
    ln1: Vec<LayerNormCache>,
    a: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Attention weights per head, `[T x T]`.
    probs: Vec<Matrix>,
    o: Matrix,
    ln2: Vec<LayerNormCache>,
    b: Matrix,
    z1: Matrix,
    f: Matrix,
}

/// Everything [`Encoder::backward`] needs from the forward pass.
pub struct EncoderCache {
    ids: Vec<TokenId>,
    blocks: Vec<BlockCache>,
    ln_f: Vec<LayerNormCache>,
}

fn layer_norm_rows(ln: &LayerNorm, x: &Matrix) -> (Matrix, Vec<LayerNormCache>) {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let mut caches = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let (y, c) = ln.forward(x.row(r));
        out.row_mut(r).copy_from_slice(&y);
        caches.push(c);
    }
    (out, caches)
}

fn layer_norm_rows_backward(ln: &LayerNorm, dy: &Matrix, caches: &[LayerNormCache], grad: &mut LayerNorm) -> Matrix {
    let mut dx = Matrix::zeros(dy.rows(), dy.cols());
    for r in 0..dy.rows() {
        let d = ln.backward(dy.row(r), &caches[r], grad);
        dx.row_mut(r).copy_from_slice(&d);
    }
    dx
}

impl Encoder {
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, init_std: f64, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let tok_emb = Matrix::random(config.vocab_size, d, init_std, rng);
        let pos_emb = Matrix::random(config.max_len, d, init_std, rng);
        let blocks = (0..config.n_layers)
            .map(|_| Block {
                ln1: LayerNorm::new(d),
                q: Linear::init(d, d, rng),
                k: Linear::init(d, d, rng),
                v: Linear::init(d, d, rng),
                o: Linear::init(d, d, rng),
                ln2: LayerNorm::new(d),
                ff1: Linear::init(d, config.ffn_dim, rng),
                ff2: Linear::init(config.ffn_dim, d, rng),
            })
            .collect();
        Ok(Encoder {
            config,
            tok_emb,
            pos_emb,
            blocks,
            ln_f: LayerNorm::new(d),
        })
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        if ids.is_empty() || ids.len() > self.config.max_len {
            return Err(Error::contract(format!(
                "sequence length {} outside 1..={}",
                ids.len(),
                self.config.max_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::contract(format!("token {bad} outside vocabulary of {}", self.config.vocab_size)));
        }
        Ok(())
    }

    /// Final hidden states `[T x d_model]`.
    pub fn forward(&self, ids: &[TokenId]) -> Result<(Matrix, EncoderCache)> {
        self.check_ids(ids)?;
        let (t_len, d) = (ids.len(), self.d_model());
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x = Matrix::zeros(t_len, d);
        for (t, &id) in ids.iter().enumerate() {
            let row = x.row_mut(t);
            for c in 0..d {
                row[c] = self.tok_emb.get(id as usize, c) + self.pos_emb.get(t, c);
            }
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let (a, ln1) = layer_norm_rows(&blk.ln1, &x);
            let q = blk.q.forward(&a);
            let k = blk.k.forward(&a);
            let v = blk.v.forward(&a);
            let mut o = Matrix::zeros(t_len, d);
            let mut probs = Vec::with_capacity(heads);
            for h in 0..heads {
                let off = h * dh;
                let mut p = Matrix::zeros(t_len, t_len);
                for i in 0..t_len {
                    let qi = &q.row(i)[off..off + dh];
                    let row = p.row_mut(i);
                    for j in 0..t_len {
                        row[j] = scale * crate::linalg::dot(qi, &k.row(j)[off..off + dh]);
                    }
                    let sm = crate::linalg::softmax(row);
                    row.copy_from_slice(&sm);
                }
                for i in 0..t_len {
                    for j in 0..t_len {
                        let w = p.get(i, j);
                        let vj = &v.row(j)[off..off + dh];
                        let oi = &mut o.row_mut(i)[off..off + dh];
                        crate::linalg::axpy(w, vj, oi);
                    }
                }
                probs.push(p);
            }
            let attn = blk.o.forward(&o);
            x.add_assign(&attn);
            let (b, ln2) = layer_norm_rows(&blk.ln2, &x);
            let z1 = blk.ff1.forward(&b);
            let mut f = z1.clone();
            f.data_mut().iter_mut().for_each(|z| *z = gelu(*z));
            x.add_assign(&blk.ff2.forward(&f));
            caches.push(BlockCache { ln1, a, q, k, v, probs, o, ln2, b, z1, f });
        }
        let (h, ln_f) = layer_norm_rows(&self.ln_f, &x);
        Ok((
            h,
            EncoderCache {
                ids: ids.to_vec(),
                blocks: caches,
                ln_f,
            },
        ))
    }

    /// Backpropagate `dh` (gradient of the final states) into `grad`.
    pub fn backward(&self, cache: &EncoderCache, dh: &Matrix, grad: &mut Encoder) {
        let d = self.d_model();
        let heads = self.config.n_heads;
        let dh_size = d / heads;
        let scale = 1.0 / (dh_size as f64).sqrt();
        let t_len = cache.ids.len();
        let mut dx = layer_norm_rows_backward(&self.ln_f, dh, &cache.ln_f, &mut grad.ln_f);
        for (bi, blk) in self.blocks.iter().enumerate().rev() {
            let c = &cache.blocks[bi];
            let g = &mut grad.blocks[bi];
            // feed-forward branch
            let mut dz1 = blk.ff2.backward(&c.f, &dx, &mut g.ff2);
            for (dz, &z) in dz1.data_mut().iter_mut().zip(c.z1.data()) {
                *dz *= gelu_grad(z);
            }
            let db = blk.ff1.backward(&c.b, &dz1, &mut g.ff1);
            dx.add_assign(&layer_norm_rows_backward(&blk.ln2, &db, &c.ln2, &mut g.ln2));
            // attention branch
            let d_o = blk.o.backward(&c.o, &dx, &mut g.o);
            let mut dq = Matrix::zeros(t_len, d);
            let mut dk = Matrix::zeros(t_len, d);
            let mut dv = Matrix::zeros(t_len, d);
            for h in 0..heads {
                let off = h * dh_size;
                let p = &c.probs[h];
                for i in 0..t_len {
                    let doi = &d_o.row(i)[off..off + dh_size];
                    // dP_ij = dO_i . V_j ; dV_j += P_ij dO_i
                    let mut dp = vec![0.0; t_len];
                    for j in 0..t_len {
                        dp[j] = crate::linalg::dot(doi, &c.v.row(j)[off..off + dh_size]);
                        crate::linalg::axpy(p.get(i, j), doi, &mut dv.row_mut(j)[off..off + dh_size]);
                    }
                    let inner: f64 = (0..t_len).map(|j| p.get(i, j) * dp[j]).sum();
                    for j in 0..t_len {
                        let ds = p.get(i, j) * (dp[j] - inner) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        crate::linalg::axpy(ds, &c.k.row(j)[off..off + dh_size], &mut dq.row_mut(i)[off..off + dh_size]);
                        crate::linalg::axpy(ds, &c.q.row(i)[off..off + dh_size], &mut dk.row_mut(j)[off..off + dh_size]);
                    }
                }
            }
            let mut da = blk.q.backward(&c.a, &dq, &mut g.q);
            da.add_assign(&blk.k.backward(&c.a, &dk, &mut g.k));
            da.add_assign(&blk.v.backward(&c.a, &dv, &mut g.v));
            dx.add_assign(&layer_norm_rows_backward(&blk.ln1, &da, &c.ln1, &mut g.ln1));
        }
        for (t, &id) in cache.ids.iter().enumerate() {
            crate::linalg::axpy(1.0, dx.row(t), grad.tok_emb.row_mut(id as usize));
            crate::linalg::axpy(1.0, dx.row(t), grad.pos_emb.row_mut(t));
        }
    }
}
