//! Generator, discriminator, and classification heads over [`Encoder`].

use rand::Rng;

use super::encoder::{Encoder, EncoderCache, EncoderConfig};
use super::layers::{tensor_name, Linear, Tensors};
use crate::error::Result;
use crate::linalg::{axpy, Matrix};
use crate::tokenizer::TokenId;

/// Masked-token generator: encoder plus an output layer tied to the token
/// embedding, with its own bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub encoder: Encoder,
    pub out_bias: Vec<f64>,
}

impl Tensors for Generator {
    fn visit<'a>(&'a self, p: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.encoder.visit(&tensor_name(p, "encoder"), out);
        self.out_bias.visit(&tensor_name(p, "out_bias"), out);
    }
    fn visit_mut<'a>(&'a mut self, p: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.encoder.visit_mut(&tensor_name(p, "encoder"), out);
        self.out_bias.visit_mut(&tensor_name(p, "out_bias"), out);
    }
}

impl Generator {
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, init_std: f64, rng: &mut R) -> Result<Self> {
        let encoder = Encoder::init(config, init_std, rng)?;
        Ok(Generator {
            out_bias: vec![0.0; config.vocab_size],
            encoder,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.out_bias.len()
    }

    pub fn forward(&self, ids: &[TokenId]) -> Result<(Matrix, EncoderCache)> {
        self.encoder.forward(ids)
    }

    /// Vocabulary logits `[P x V]` at the given rows of `states`.
    pub fn logits(&self, states: &Matrix, positions: &[usize]) -> Matrix {
        let mut picked = Matrix::zeros(positions.len(), states.cols());
        for (r, &p) in positions.iter().enumerate() {
            picked.row_mut(r).copy_from_slice(states.row(p));
        }
        let mut logits = picked.matmul_t(&self.encoder.tok_emb);
        for r in 0..logits.rows() {
            axpy(1.0, &self.out_bias, logits.row_mut(r));
        }
        logits
    }

    /// Backpropagate logit gradients into the tied embedding, the bias, and
    /// the state gradient `dstates`.
    pub fn logits_backward(&self, states: &Matrix, positions: &[usize], dlogits: &Matrix, grad: &mut Generator, dstates: &mut Matrix) {
        for (r, &p) in positions.iter().enumerate() {
            let dl = dlogits.row(r);
            axpy(1.0, dl, &mut grad.out_bias);
            grad.encoder.tok_emb.add_outer(1.0, dl, states.row(p));
            let ds = self.encoder.tok_emb.matvec_t(dl);
            axpy(1.0, &ds, dstates.row_mut(p));
        }
    }
}

/// Replaced-token detector: encoder plus a per-token logistic head.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub encoder: Encoder,
    pub head: Linear,
}

impl Tensors for Discriminator {
    fn visit<'a>(&'a self, p: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.encoder.visit(&tensor_name(p, "encoder"), out);
        self.head.visit(&tensor_name(p, "head"), out);
    }
    fn visit_mut<'a>(&'a mut self, p: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.encoder.visit_mut(&tensor_name(p, "encoder"), out);
        self.head.visit_mut(&tensor_name(p, "head"), out);
    }
}

impl Discriminator {
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, init_std: f64, rng: &mut R) -> Result<Self> {
        let encoder = Encoder::init(config, init_std, rng)?;
        let head = Linear::init(config.d_model, 1, rng);
        Ok(Discriminator { encoder, head })
    }

    /// Per-token "replaced" logits, plus what backward needs.
    pub fn forward(&self, ids: &[TokenId]) -> Result<(Vec<f64>, Matrix, EncoderCache)> {
        let (h, cache) = self.encoder.forward(ids)?;
        let logits = self.head.forward(&h).data().to_vec();
        Ok((logits, h, cache))
    }

    pub fn backward(&self, states: &Matrix, cache: &EncoderCache, dlogits: &[f64], grad: &mut Discriminator) {
        let dy = Matrix::from_vec(dlogits.len(), 1, dlogits.to_vec());
        let dh = self.head.backward(states, &dy, &mut grad.head);
        self.encoder.backward(cache, &dh, &mut grad.encoder);
    }
}
