//! Sequence classification on top of the pretrained discriminator encoder,
//! trained with the cross-entropy / supervised-contrastive mixture.

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::encoder::Encoder;
use super::layers::{tensor_name, Linear, Tensors};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{accuracy, f1_scores, F1Report};
use crate::objectives::{ce_loss_logits, finetune_loss, scl_loss};
use crate::rng::{indexed_seed, rng_from_seed, stream_seed};
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// The first position (the `[CLS]` token).
    First,
    Mean,
}

pub const FINETUNE_CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub version: u32,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of cross-entropy; `1 - lambda` goes to the contrastive term.
    pub lambda: f64,
    pub temperature: f64,
    pub freeze_encoder: bool,
    pub pooling: Pooling,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            version: FINETUNE_CONFIG_VERSION,
            epochs: 20,
            batch_size: 8,
            lambda: 0.9,
            temperature: 1.0,
            freeze_encoder: false,
            pooling: Pooling::First,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: FinetuneConfig =
            serde_json::from_str(&text).map_err(|e| Error::format("fine-tuning config", path, e))?;
        if config.version != FINETUNE_CONFIG_VERSION {
            return Err(Error::format("fine-tuning config", path, format!("unsupported version {}", config.version)));
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub encoder: Encoder,
    pub head: Linear,
    pub pooling: Pooling,
}

impl Tensors for Classifier {
    fn visit<'a>(&'a self, p: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.encoder.visit(&tensor_name(p, "encoder"), out);
        self.head.visit(&tensor_name(p, "head"), out);
    }
    fn visit_mut<'a>(&'a mut self, p: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.encoder.visit_mut(&tensor_name(p, "encoder"), out);
        self.head.visit_mut(&tensor_name(p, "head"), out);
    }
}

impl Classifier {
    fn pool(&self, h: &Matrix) -> Vec<f64> {
        match self.pooling {
            Pooling::First => h.row(0).to_vec(),
            Pooling::Mean => {
                let mut m = vec![0.0; h.cols()];
                for r in 0..h.rows() {
                    crate::linalg::axpy(1.0 / h.rows() as f64, h.row(r), &mut m);
                }
                m
            }
        }
    }

    fn pool_backward(&self, dz: &[f64], rows: usize) -> Matrix {
        let mut dh = Matrix::zeros(rows, dz.len());
        match self.pooling {
            Pooling::First => dh.row_mut(0).copy_from_slice(dz),
            Pooling::Mean => {
                for r in 0..rows {
                    crate::linalg::axpy(1.0 / rows as f64, dz, dh.row_mut(r));
                }
            }
        }
        dh
    }

    pub fn logits(&self, ids: &[TokenId]) -> Result<Vec<f64>> {
        let (h, _) = self.encoder.forward(ids)?;
        let z = Matrix::from_vec(1, h.cols(), self.pool(&h));
        Ok(self.head.forward(&z).data().to_vec())
    }

    pub fn predict(&self, ids: &[TokenId]) -> Result<usize> {
        let logits = self.logits(ids)?;
        Ok((0..logits.len()).fold(0, |best, k| if logits[k] > logits[best] { k } else { best }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneEpoch {
    pub epoch: usize,
    pub ce: f64,
    pub scl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub lambda: f64,
    pub epochs: Vec<FinetuneEpoch>,
    pub accuracy: f64,
    pub f1: F1Report,
    pub predictions: Vec<usize>,
    pub warnings: Vec<String>,
}

fn normalize(z: &[f64]) -> (Vec<f64>, f64) {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    (z.iter().map(|v| v / norm).collect(), norm)
}

/// Fine-tune a classifier initialized from `encoder` on `train`, then
/// evaluate on `eval`. Labels must lie in `0..classes`.
pub fn finetune_classifier(
    encoder: &Encoder,
    train: &[(Vec<TokenId>, usize)],
    eval: &[(Vec<TokenId>, usize)],
    classes: usize,
    config: &FinetuneConfig,
) -> Result<(Classifier, FinetuneReport)> {
    if classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    if !(0.0..=1.0).contains(&config.lambda) || config.batch_size == 0 || !(config.temperature > 0.0) {
        return Err(Error::Config(format!("invalid fine-tuning settings {config:?}")));
    }
    config.adam.validate()?;
    if let Some((i, (_, l))) = train.iter().chain(eval).enumerate().find(|(_, (_, l))| *l >= classes) {
        return Err(Error::contract(format!("example {i} has label {l}, outside 0..{classes}")));
    }
    if eval.is_empty() {
        return Err(Error::contract("empty evaluation set"));
    }
    let mut warnings = Vec::new();
    let mut rng = rng_from_seed(stream_seed(config.seed, "finetune-init"));
    let mut model = Classifier {
        encoder: encoder.clone(),
        head: Linear::init(encoder.d_model(), classes, &mut rng),
        pooling: config.pooling,
    };
    let use_scl = config.lambda < 1.0;
    if use_scl {
        let distinct: std::collections::BTreeSet<usize> = train.iter().map(|(_, l)| *l).collect();
        if distinct.len() < 2 {
            warnings.push("single-class training data: the contrastive term has no negatives".to_string());
        }
    }
    let sizes: Vec<usize> = model.tensors().iter().map(|(_, t)| t.len()).collect();
    let mut adam = Adam::new(config.adam, &sizes);
    let mut epochs = Vec::new();
    let mut singleton_batches = 0usize;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng_from_seed(indexed_seed(stream_seed(config.seed, "finetune-shuffle"), epoch as u64)));
        let (mut ce_sum, mut scl_sum, mut total_sum, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let mut grads = model.zeroed();
            let mut pooled = Vec::new();
            let mut caches = Vec::new();
            for &i in chunk {
                let (h, cache) = model.encoder.forward(&train[i].0)?;
                pooled.push(model.pool(&h));
                caches.push((h.rows(), cache));
            }
            let labels: Vec<usize> = chunk.iter().map(|&i| train[i].1).collect();
            let z = Matrix::from_rows(&pooled);
            let logits = model.head.forward(&z);
            let (ce, mut dlogits) = ce_loss_logits(&logits, &labels)?;
            dlogits.scale(config.lambda);
            let mut dz = model.head.backward(&z, &dlogits, &mut grads.head);
            let mut scl = 0.0;
            if use_scl {
                let normed: Vec<(Vec<f64>, f64)> = pooled.iter().map(|p| normalize(p)).collect();
                let f = Matrix::from_rows(&normed.iter().map(|(v, _)| v.clone()).collect::<Vec<_>>());
                let out = scl_loss(&f, &labels, config.temperature)?;
                if out.singleton_anchors > 0 {
                    singleton_batches += 1;
                }
                scl = out.loss;
                for (r, (fr, norm)) in normed.iter().enumerate() {
                    let df = out.grad.row(r);
                    let proj: f64 = fr.iter().zip(df).map(|(a, b)| a * b).sum();
                    let k = 1.0 - config.lambda;
                    for c in 0..fr.len() {
                        dz.row_mut(r)[c] += k * (df[c] - fr[c] * proj) / norm;
                    }
                }
            }
            let total = finetune_loss(ce, scl, config.lambda)?;
            if !config.freeze_encoder {
                for (r, (rows, cache)) in caches.iter().enumerate() {
                    let dh = model.pool_backward(dz.row(r), *rows);
                    model.encoder.backward(cache, &dh, &mut grads.encoder);
                }
            }
            let params: Vec<&mut [f64]> = model.tensors_mut().into_iter().map(|(_, t)| t).collect();
            let g: Vec<&[f64]> = grads.tensors().into_iter().map(|(_, t)| t).collect();
            adam.update(params, g)?;
            ce_sum += ce;
            scl_sum += scl;
            total_sum += total;
            steps += 1;
        }
        let n = steps.max(1) as f64;
        epochs.push(FinetuneEpoch {
            epoch,
            ce: ce_sum / n,
            scl: scl_sum / n,
            total: total_sum / n,
        });
    }
    if singleton_batches > 0 {
        warnings.push(format!(
            "{singleton_batches} batches had classes with a single example; those anchors add nothing to the contrastive term"
        ));
    }
    let predictions = eval.iter().map(|(ids, _)| model.predict(ids)).collect::<Result<Vec<_>>>()?;
    let gold: Vec<usize> = eval.iter().map(|(_, l)| *l).collect();
    let all: Vec<usize> = (0..classes).collect();
    let report = FinetuneReport {
        lambda: config.lambda,
        epochs,
        accuracy: accuracy(&predictions, &gold)?,
        f1: f1_scores(&predictions, &gold, &all)?,
        predictions,
        warnings,
    };
    Ok((model, report))
}
