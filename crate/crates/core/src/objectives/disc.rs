use crate::error::{Error, Result};

/// Probabilities are clamped to `[DISC_CLAMP, 1 - DISC_CLAMP]`.
pub const DISC_CLAMP: f64 = 1e-7;

fn check(n: usize, flags: &[bool]) -> Result<()> {
    if n != flags.len() {
        return Err(Error::contract(format!("{n} predictions for {} flags", flags.len())));
    }
    Ok(())
}

/// Mean binary cross-entropy of "replaced" probabilities against flags, with
/// the gradient w.r.t. the (unclamped) probabilities. The gradient is zero
/// where clamping is active.
pub fn disc_loss(probs: &[f64], flags: &[bool]) -> Result<(f64, Vec<f64>)> {
    check(probs.len(), flags)?;
    if probs.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = probs.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for (&raw, &flag) in probs.iter().zip(flags) {
        let p = raw.clamp(DISC_CLAMP, 1.0 - DISC_CLAMP);
        let active = p == raw;
        if flag {
            loss -= p.ln();
            grad.push(if active { -1.0 / (p * n) } else { 0.0 });
        } else {
            loss -= (1.0 - p).ln();
            grad.push(if active { 1.0 / ((1.0 - p) * n) } else { 0.0 });
        }
    }
    Ok((loss / n, grad))
}

/// [`disc_loss`] on logits `z` with `p = sigmoid(z)`; the gradient w.r.t.
/// the logits is `(p - flag) / n`. Used in training for stability.
pub fn disc_loss_logits(logits: &[f64], flags: &[bool]) -> Result<(f64, Vec<f64>)> {
    check(logits.len(), flags)?;
    if logits.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &flag) in logits.iter().zip(flags) {
        // -log sigmoid(z) = softplus(-z), -log(1 - sigmoid(z)) = softplus(z)
        let t = if flag { -z } else { z };
        loss += softplus(t);
        grad.push((sigmoid(z) - f64::from(u8::from(flag))) / n);
    }
    Ok((loss / n, grad))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
