use crate::error::{Error, Result};
use crate::linalg::{dot, logsumexp, softmax, Matrix};

/// Mean cross-entropy of one-hot `labels` against predicted class
/// probabilities (`[N x C]`, rows summing to 1), with the gradient w.r.t.
/// the probabilities.
pub fn ce_loss(probs: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, c) = probs.shape();
    if labels.len() != n || n == 0 {
        return Err(Error::contract(format!("{} labels for {n} rows", labels.len())));
    }
    let mut grad = Matrix::zeros(n, c);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::contract(format!("label {y} outside {c} classes")));
        }
        let row = probs.row(i);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::contract(format!("row {i} is not a probability distribution")));
        }
        loss -= row[y].ln();
        grad.set(i, y, -1.0 / (row[y] * n as f64));
    }
    Ok((loss / n as f64, grad))
}

/// [`ce_loss`] composed with a row softmax; gradient w.r.t. the logits.
pub fn ce_loss_logits(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    super::mlm_loss(logits, labels)
}

/// Result of [`scl_loss`].
#[derive(Debug, Clone)]
pub struct SclOutput {
    pub loss: f64,
    /// Gradient w.r.t. the features, `[N x d]`.
    pub grad: Matrix,
    /// Anchors whose class has no other member; they contribute nothing.
    pub singleton_anchors: usize,
}

/// Supervised contrastive loss over a batch of feature rows:
///
/// ```text
/// L = sum_i -1/(N_{y_i} - 1) sum_{j != i, y_j = y_i}
///         log( exp(f_i . f_j / t) / sum_{k != i} exp(f_i . f_k / t) )
/// ```
///
/// Features are used as given (normalize them first for the usual cosine
/// form). Anchors alone in their class contribute 0.
pub fn scl_loss(features: &Matrix, labels: &[usize], temperature: f64) -> Result<SclOutput> {
    let (n, d) = features.shape();
    if labels.len() != n {
        return Err(Error::contract(format!("{} labels for {n} feature rows", labels.len())));
    }
    if n < 2 {
        return Err(Error::contract("contrastive loss needs at least two examples"));
    }
    if !(temperature > 0.0) {
        return Err(Error::contract("temperature must be positive"));
    }
    let inv_t = 1.0 / temperature;
    let mut grad = Matrix::zeros(n, d);
    let mut loss = 0.0;
    let mut singleton_anchors = 0;
    let mut sims = vec![0.0; n];
    for i in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if positives.is_empty() {
            singleton_anchors += 1;
            continue;
        }
        let inv_p = 1.0 / positives.len() as f64;
        let fi = features.row(i);
        let others: Vec<usize> = (0..n).filter(|&k| k != i).collect();
        for &k in &others {
            sims[k] = dot(fi, features.row(k)) * inv_t;
        }
        let logits: Vec<f64> = others.iter().map(|&k| sims[k]).collect();
        let lse = logsumexp(&logits);
        loss += lse - inv_p * positives.iter().map(|&j| sims[j]).sum::<f64>();
        // dL/ds_ik = softmax_k - [k positive] / |P|
        let probs = softmax(&logits);
        let mut coef = vec![0.0; n];
        for (&k, p) in others.iter().zip(probs) {
            coef[k] = p;
        }
        for &j in &positives {
            coef[j] -= inv_p;
        }
        for k in 0..n {
            let c = coef[k] * inv_t;
            if c == 0.0 {
                continue;
            }
            let fk = features.row(k).to_vec();
            crate::linalg::axpy(c, &fk, grad.row_mut(i));
            crate::linalg::axpy(c, fi, grad.row_mut(k));
        }
    }
    if singleton_anchors == n {
        log::warn!("contrastive loss: every class in the batch is a singleton");
    }
    Ok(SclOutput {
        loss,
        grad,
        singleton_anchors,
    })
}

/// `lambda * ce + (1 - lambda) * scl`
pub fn finetune_loss(ce: f64, scl: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::contract(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(lambda * ce + (1.0 - lambda) * scl)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ce_checks_rows() {
        let bad = Matrix::from_rows(&[vec![0.5, 0.6]]);
        assert!(ce_loss(&bad, &[0]).is_err());
        let ok = Matrix::from_rows(&[vec![0.25, 0.75]]);
        let (l, g) = ce_loss(&ok, &[1]).unwrap();
        assert!((l + 0.75f64.ln()).abs() < 1e-15);
        assert_eq!(g.get(0, 0), 0.0);
    }

    #[test]
    fn all_singletons_give_zero() {
        let f = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let out = scl_loss(&f, &[0, 1], 1.0).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.singleton_anchors, 2);
        assert!(out.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn lambda_range_enforced() {
        assert!(finetune_loss(1.0, 1.0, 1.5).is_err());
    }
}
