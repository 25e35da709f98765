//! GELU and layer normalization with their derivatives.

use serde::{Deserialize, Serialize};

pub const LAYER_NORM_EPS: f64 = 1e-5;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU, `0.5 x (1 + erf(x / sqrt 2))`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// `d gelu / dx = Phi(x) + x phi(x)`
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    cdf + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Learnable gain and bias of a layer normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Saved forward values for [`LayerNorm::backward`].
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Vec<f64>,
    inv_std: f64,
}

impl LayerNorm {
    /// Gain 1, bias 0.
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gain: vec![1.0; dim],
            bias: vec![0.0; dim],
        }
    }

    pub fn zeros(dim: usize) -> Self {
        LayerNorm {
            gain: vec![0.0; dim],
            bias: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, LayerNormCache) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
        let y = xhat
            .iter()
            .zip(self.gain.iter().zip(&self.bias))
            .map(|(h, (g, b))| g * h + b)
            .collect();
        (y, LayerNormCache { xhat, inv_std })
    }

    /// Returns `dx`; accumulates into `grad`.
    pub fn backward(&self, dy: &[f64], cache: &LayerNormCache, grad: &mut LayerNorm) -> Vec<f64> {
        let n = dy.len() as f64;
        let mut dxhat = Vec::with_capacity(dy.len());
        for (i, &d) in dy.iter().enumerate() {
            grad.gain[i] += d * cache.xhat[i];
            grad.bias[i] += d;
            dxhat.push(d * self.gain[i]);
        }
        let sum: f64 = dxhat.iter().sum();
        let sum_x: f64 = dxhat.iter().zip(&cache.xhat).map(|(d, h)| d * h).sum();
        dxhat
            .iter()
            .zip(&cache.xhat)
            .map(|(d, h)| cache.inv_std * (d - sum / n - h * sum_x / n))
            .collect()
    }
}
