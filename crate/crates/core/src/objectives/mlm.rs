use crate::error::{Error, Result};
use crate::linalg::{logsumexp, softmax, Matrix};

/// Mean negative log-likelihood of `labels` under row-wise softmax of
/// `logits` (`[positions x vocab]`), with its gradient w.r.t. the logits.
///
/// No positions gives loss 0 and an empty gradient.
pub fn mlm_loss(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (p, v) = logits.shape();
    if labels.len() != p {
        return Err(Error::contract(format!("{} labels for {p} logit rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= v) {
        return Err(Error::contract(format!("label {bad} outside vocabulary of {v}")));
    }
    let mut grad = Matrix::zeros(p, v);
    if p == 0 {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / p as f64;
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        loss += logsumexp(row) - row[label];
        let g = grad.row_mut(r);
        for (gi, pi) in g.iter_mut().zip(softmax(row)) {
            *gi = pi * scale;
        }
        g[label] -= scale;
    }
    Ok((loss * scale, grad))
}
