//! Span boundary objective.
//!
//! Each token inside a masked span is predicted from the encoder states of
//! the two tokens just outside the span plus a learned embedding of its
//! 1-based offset in the span:
//!
//! ```text
//! h0 = [x_left ; x_right ; pos_i]
//! h1 = LayerNorm1(GELU(W1 h0))
//! y  = LayerNorm2(GELU(W2 h1))
//! ```
//!
//! and scored against the output embedding, `E y`.

use rand::Rng;

use super::nn::{gelu, gelu_grad, LayerNorm, LayerNormCache};
use crate::error::{Error, Result};
use crate::linalg::{logsumexp, softmax, Matrix};
use crate::masking::{MaskedExample, IGNORE_LABEL};

#[derive(Debug, Clone, PartialEq)]
pub struct SboParams {
    /// `[hidden x (2 d_model + pos_dim)]`
    pub w1: Matrix,
    /// `[d_model x hidden]`
    pub w2: Matrix,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
    /// `[max_span x pos_dim]`, row `k - 1` embeds span offset `k`.
    pub pos_table: Matrix,
}

impl SboParams {
    pub fn zeros(d_model: usize, hidden: usize, pos_dim: usize, max_span: usize) -> Self {
        SboParams {
            w1: Matrix::zeros(hidden, 2 * d_model + pos_dim),
            w2: Matrix::zeros(d_model, hidden),
            ln1: LayerNorm::zeros(hidden),
            ln2: LayerNorm::zeros(d_model),
            pos_table: Matrix::zeros(max_span, pos_dim),
        }
    }

    /// Gaussian weights scaled by fan-in, unit-gain zero-bias layer norms.
    pub fn init<R: Rng + ?Sized>(d_model: usize, hidden: usize, pos_dim: usize, max_span: usize, rng: &mut R) -> Self {
        let fan1 = (2 * d_model + pos_dim) as f64;
        SboParams {
            w1: Matrix::random(hidden, 2 * d_model + pos_dim, fan1.powf(-0.5), rng),
            w2: Matrix::random(d_model, hidden, (hidden as f64).powf(-0.5), rng),
            ln1: LayerNorm::new(hidden),
            ln2: LayerNorm::new(d_model),
            pos_table: Matrix::random(max_span, pos_dim, 0.02, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        SboParams::zeros(self.d_model(), self.hidden(), self.pos_dim(), self.max_span())
    }

    pub fn d_model(&self) -> usize {
        self.w2.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn pos_dim(&self) -> usize {
        self.pos_table.cols()
    }

    pub fn max_span(&self) -> usize {
        self.pos_table.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h, p) = (self.d_model(), self.hidden(), self.pos_dim());
        if self.w1.cols() != 2 * d + p || self.w2.cols() != h || self.ln1.dim() != h || self.ln2.dim() != d {
            return Err(Error::contract("span boundary parameter shapes disagree"));
        }
        Ok(())
    }

    /// Named parameter slices in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("sbo.w1", self.w1.data()),
            ("sbo.w2", self.w2.data()),
            ("sbo.ln1.gain", &self.ln1.gain),
            ("sbo.ln1.bias", &self.ln1.bias),
            ("sbo.ln2.gain", &self.ln2.gain),
            ("sbo.ln2.bias", &self.ln2.bias),
            ("sbo.pos_table", self.pos_table.data()),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("sbo.w1", self.w1.data_mut()),
            ("sbo.w2", self.w2.data_mut()),
            ("sbo.ln1.gain", &mut self.ln1.gain),
            ("sbo.ln1.bias", &mut self.ln1.bias),
            ("sbo.ln2.gain", &mut self.ln2.gain),
            ("sbo.ln2.bias", &mut self.ln2.bias),
            ("sbo.pos_table", self.pos_table.data_mut()),
        ]
    }
}

/// Forward values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct SboCache {
    h0: Vec<f64>,
    a1: Vec<f64>,
    ln1: LayerNormCache,
    h1: Vec<f64>,
    a2: Vec<f64>,
    ln2: LayerNormCache,
    span_pos: usize,
}

fn check_pos(span_pos: usize, params: &SboParams) -> Result<()> {
    if span_pos == 0 || span_pos > params.max_span() {
        return Err(Error::contract(format!(
            "span position {span_pos} outside 1..={}",
            params.max_span()
        )));
    }
    Ok(())
}

/// The representation `y` for offset `span_pos` (1-based) of a span with
/// the given boundary states.
pub fn sbo_representation(left: &[f64], right: &[f64], span_pos: usize, params: &SboParams) -> Result<Vec<f64>> {
    Ok(sbo_forward(left, right, span_pos, params)?.0)
}

pub fn sbo_forward(left: &[f64], right: &[f64], span_pos: usize, params: &SboParams) -> Result<(Vec<f64>, SboCache)> {
    check_pos(span_pos, params)?;
    let d = params.d_model();
    if left.len() != d || right.len() != d {
        return Err(Error::contract(format!("boundary states must have {d} entries")));
    }
    let mut h0 = Vec::with_capacity(params.w1.cols());
    h0.extend_from_slice(left);
    h0.extend_from_slice(right);
    h0.extend_from_slice(params.pos_table.row(span_pos - 1));
    let a1 = params.w1.matvec(&h0);
    let g1: Vec<f64> = a1.iter().map(|&v| gelu(v)).collect();
    let (h1, ln1) = params.ln1.forward(&g1);
    let a2 = params.w2.matvec(&h1);
    let g2: Vec<f64> = a2.iter().map(|&v| gelu(v)).collect();
    let (y, ln2) = params.ln2.forward(&g2);
    Ok((
        y,
        SboCache {
            h0,
            a1,
            ln1,
            h1,
            a2,
            ln2,
            span_pos,
        },
    ))
}

/// Backpropagate `dy`; accumulates parameter gradients into `grad` and
/// returns the gradients w.r.t. the left and right boundary states.
pub fn sbo_backward(dy: &[f64], cache: &SboCache, params: &SboParams, grad: &mut SboParams) -> (Vec<f64>, Vec<f64>) {
    let d = params.d_model();
    let dg2 = params.ln2.backward(dy, &cache.ln2, &mut grad.ln2);
    let da2: Vec<f64> = dg2.iter().zip(&cache.a2).map(|(g, &a)| g * gelu_grad(a)).collect();
    grad.w2.add_outer(1.0, &da2, &cache.h1);
    let dh1 = params.w2.matvec_t(&da2);
    let dg1 = params.ln1.backward(&dh1, &cache.ln1, &mut grad.ln1);
    let da1: Vec<f64> = dg1.iter().zip(&cache.a1).map(|(g, &a)| g * gelu_grad(a)).collect();
    grad.w1.add_outer(1.0, &da1, &cache.h0);
    let dh0 = params.w1.matvec_t(&da1);
    for (g, v) in grad.pos_table.row_mut(cache.span_pos - 1).iter_mut().zip(&dh0[2 * d..]) {
        *g += v;
    }
    (dh0[..d].to_vec(), dh0[d..2 * d].to_vec())
}

/// One predicted token: boundary rows into the encoder states, its 1-based
/// offset in the span, and the target id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SboTarget {
    pub left: usize,
    pub right: usize,
    pub span_pos: usize,
    pub target: usize,
}

/// Targets for every position of every span of a masked example, in the
/// masked sequence's coordinates. Spans longer than `max_span` are skipped.
pub fn sbo_targets(example: &MaskedExample, max_span: usize) -> Vec<SboTarget> {
    let mut out = Vec::new();
    for span in &example.spans {
        if span.end - span.start > max_span {
            continue;
        }
        for i in span.start..span.end {
            let label = example.labels[i];
            debug_assert_ne!(label, IGNORE_LABEL);
            out.push(SboTarget {
                left: span.left_boundary,
                right: span.right_boundary,
                span_pos: i - span.start + 1,
                target: label as usize,
            });
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SboGrads {
    pub params: SboParams,
    /// Same shape as the encoder states.
    pub states: Matrix,
    /// Same shape as the output embedding.
    pub embedding: Matrix,
}

#[derive(Debug, Clone)]
pub struct SboOutput {
    pub loss: f64,
    pub grads: SboGrads,
}

/// Mean over targets of `-log softmax(E y)[target]`.
///
/// `states` is `[seq_len x d_model]`, `embedding` is `[vocab x d_model]`.
/// No targets gives loss 0 and zero gradients.
pub fn sbo_loss(targets: &[SboTarget], states: &Matrix, params: &SboParams, embedding: &Matrix) -> Result<SboOutput> {
    params.validate()?;
    let d = params.d_model();
    if states.cols() != d || embedding.cols() != d {
        return Err(Error::contract("state/embedding width differs from d_model"));
    }
    let mut grads = SboGrads {
        params: params.zeros_like(),
        states: Matrix::zeros(states.rows(), d),
        embedding: Matrix::zeros(embedding.rows(), d),
    };
    if targets.is_empty() {
        return Ok(SboOutput { loss: 0.0, grads });
    }
    let scale = 1.0 / targets.len() as f64;
    let mut loss = 0.0;
    for t in targets {
        if t.left >= states.rows() || t.right >= states.rows() {
            return Err(Error::contract(format!("boundary ({}, {}) outside {} states", t.left, t.right, states.rows())));
        }
        if t.target >= embedding.rows() {
            return Err(Error::contract(format!("target {} outside vocabulary of {}", t.target, embedding.rows())));
        }
        let (y, cache) = sbo_forward(states.row(t.left), states.row(t.right), t.span_pos, params)?;
        let scores = embedding.matvec(&y);
        loss += logsumexp(&scores) - scores[t.target];
        let mut dscores = softmax(&scores);
        dscores[t.target] -= 1.0;
        dscores.iter_mut().for_each(|v| *v *= scale);
        grads.embedding.add_outer(1.0, &dscores, &y);
        let dy = embedding.matvec_t(&dscores);
        let (dl, dr) = sbo_backward(&dy, &cache, params, &mut grads.params);
        crate::linalg::axpy(1.0, &dl, grads.states.row_mut(t.left));
        crate::linalg::axpy(1.0, &dr, grads.states.row_mut(t.right));
    }
    Ok(SboOutput {
        loss: loss * scale,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn zero_weights_give_layer_norm_bias() {
        let mut p = SboParams::zeros(3, 4, 2, 5);
        p.ln1 = LayerNorm::new(4);
        p.ln2 = LayerNorm { gain: vec![1.0; 3], bias: vec![0.5, -1.0, 2.0] };
        let y = sbo_representation(&[1.0, 2.0, 3.0], &[-1.0, 0.0, 4.0], 2, &p).unwrap();
        assert_eq!(y, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn position_range_enforced() {
        let p = SboParams::init(2, 3, 2, 4, &mut rng_from_seed(0));
        assert!(sbo_representation(&[0.0; 2], &[0.0; 2], 0, &p).is_err());
        assert!(sbo_representation(&[0.0; 2], &[0.0; 2], 5, &p).is_err());
        assert!(sbo_representation(&[0.0; 2], &[0.0; 2], 4, &p).is_ok());
    }

    #[test]
    fn left_right_order_matters() {
        let p = SboParams::init(4, 6, 3, 10, &mut rng_from_seed(5));
        let a = [0.3, -1.2, 0.8, 0.1];
        let b = [-0.7, 0.4, 1.5, -0.2];
        let y1 = sbo_representation(&a, &b, 1, &p).unwrap();
        let y2 = sbo_representation(&b, &a, 1, &p).unwrap();
        assert!(y1.iter().zip(&y2).any(|(u, v)| (u - v).abs() > 1e-6));
    }

    #[test]
    fn empty_targets_zero_loss() {
        let p = SboParams::init(2, 3, 2, 4, &mut rng_from_seed(0));
        let out = sbo_loss(&[], &Matrix::zeros(3, 2), &p, &Matrix::zeros(5, 2)).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads.states.data().iter().all(|&g| g == 0.0));
    }
}
