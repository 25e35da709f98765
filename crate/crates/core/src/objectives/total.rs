use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mixing weights for the pretraining and fine-tuning losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Weight of the span boundary loss.
    pub lambda1: f64,
    /// Weight of the discriminator loss.
    pub lambda2: f64,
    /// Cross-entropy share of the fine-tuning loss.
    pub lambda_cls: f64,
    /// Contrastive temperature.
    pub temperature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 50.0,
            lambda_cls: 0.9,
            temperature: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.lambda_cls, self.temperature];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if self.lambda_cls > 1.0 {
            return Err(Error::Config("lambda_cls must be in [0, 1]".into()));
        }
        if self.temperature == 0.0 {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Component losses of one pretraining step (or an epoch average).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_mlm: f64,
    pub l_sbo: f64,
    pub l_disc: f64,
    pub total: f64,
}

impl LossReport {
    pub fn new(l_mlm: f64, l_sbo: f64, l_disc: f64, weights: &LossWeights) -> Result<Self> {
        Ok(LossReport {
            l_mlm,
            l_sbo,
            l_disc,
            total: total_pretrain_loss(l_mlm, l_sbo, l_disc, weights)?,
        })
    }
}

/// `l_mlm + lambda1 * l_sbo + lambda2 * l_disc`
pub fn total_pretrain_loss(l_mlm: f64, l_sbo: f64, l_disc: f64, weights: &LossWeights) -> Result<f64> {
    for (value, component) in [(l_mlm, "l_mlm"), (l_sbo, "l_sbo"), (l_disc, "l_disc")] {
        if !value.is_finite() {
            return Err(Error::NonFinite { component });
        }
    }
    Ok(l_mlm + weights.lambda1 * l_sbo + weights.lambda2 * l_disc)
}
