//! Generator/discriminator pretraining loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::encoder::EncoderConfig;
use super::eval::{perplexity, phrase_probability, PerplexityReport};
use super::layers::{tensor_name, Tensors};
use super::model::{Discriminator, Generator};
use crate::error::{Error, Result};
use crate::linalg::{softmax, Matrix};
use crate::masking::{mask_batch, stage_schedule, MaskRecord, MaskedExample, Masker, Stage, StageSplit, IGNORE_LABEL};
use crate::objectives::{disc_loss_logits, mlm_loss, sbo_loss, sbo_targets, LossReport, LossWeights, SboParams};
use crate::rng::{indexed_seed, rng_from_seed, stream_seed, ChaCha8Rng};
use crate::tokenizer::TokenId;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub version: u32,
    /// Discriminator (and default generator) shape.
    pub encoder: EncoderConfig,
    /// Generator shape when it should differ from `encoder`.
    pub generator: Option<EncoderConfig>,
    /// Hidden width of the span boundary head; 0 means `d_model`.
    pub sbo_hidden: usize,
    /// Width of the span position embedding; 0 means `d_model`.
    pub sbo_pos_dim: usize,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub stage_split: StageSplit,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            version: CONFIG_VERSION,
            encoder: EncoderConfig::default(),
            generator: None,
            sbo_hidden: 0,
            sbo_pos_dim: 0,
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            batch_size: 4,
            epochs: 4,
            stage_split: StageSplit::default(),
            init_std: 0.02,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PretrainConfig = serde_json::from_str(&text).map_err(|e| Error::format("pretraining config", path, e))?;
        if config.version != CONFIG_VERSION {
            return Err(Error::format("pretraining config", path, format!("unsupported version {}", config.version)));
        }
        Ok(config)
    }

    pub fn generator_config(&self) -> EncoderConfig {
        let mut g = self.generator.unwrap_or(self.encoder);
        g.vocab_size = self.encoder.vocab_size;
        g
    }

    /// Fill in the vocabulary size and the SBO widths.
    pub fn resolved(&self, vocab_size: usize) -> Self {
        let mut c = self.clone();
        c.encoder.vocab_size = vocab_size;
        if let Some(g) = c.generator.as_mut() {
            g.vocab_size = vocab_size;
        }
        let d = c.generator_config().d_model;
        if c.sbo_hidden == 0 {
            c.sbo_hidden = d;
        }
        if c.sbo_pos_dim == 0 {
            c.sbo_pos_dim = d;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported config version {}", self.version)));
        }
        self.encoder.validate()?;
        self.generator_config().validate()?;
        self.weights.validate()?;
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs > 0 && self.stage_split.word_only_epochs > self.epochs {
            return Err(Error::Config(format!(
                "stage split has {} word-only epochs in a {}-epoch run",
                self.stage_split.word_only_epochs, self.epochs
            )));
        }
        Ok(())
    }
}

/// Every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub sbo: SboParams,
}

impl Tensors for Model {
    fn visit<'a>(&'a self, p: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.generator.visit(&tensor_name(p, "generator"), out);
        self.discriminator.visit(&tensor_name(p, "discriminator"), out);
        Tensors::visit(&self.sbo, &tensor_name(p, "sbo"), out);
    }
    fn visit_mut<'a>(&'a mut self, p: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.generator.visit_mut(&tensor_name(p, "generator"), out);
        self.discriminator.visit_mut(&tensor_name(p, "discriminator"), out);
        Tensors::visit_mut(&mut self.sbo, &tensor_name(p, "sbo"), out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Resolved configuration (vocabulary size filled in).
    pub config: PretrainConfig,
    pub model: Model,
    pub adam: Adam,
    /// Completed epochs.
    pub epoch: usize,
}

impl TrainState {
    pub fn init(config: &PretrainConfig, vocab_size: usize, max_span: usize) -> Result<Self> {
        let config = config.resolved(vocab_size);
        config.validate()?;
        let mut rng = rng_from_seed(stream_seed(config.seed, "init"));
        let generator = Generator::init(config.generator_config(), config.init_std, &mut rng)?;
        let discriminator = Discriminator::init(config.encoder, config.init_std, &mut rng)?;
        let d = config.generator_config().d_model;
        let sbo = SboParams::init(d, config.sbo_hidden, config.sbo_pos_dim, max_span, &mut rng);
        let model = Model {
            generator,
            discriminator,
            sbo,
        };
        let sizes: Vec<usize> = model.tensors().iter().map(|(_, t)| t.len()).collect();
        Ok(TrainState {
            adam: Adam::new(config.adam, &sizes),
            config,
            model,
            epoch: 0,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.config.encoder.vocab_size
    }
}

/// Corrupt masked positions with one generator sample each. A sample equal
/// to the original token is flagged as not replaced.
pub fn sample_replacements<R: Rng + ?Sized>(
    logits: &Matrix,
    positions: &[usize],
    original: &[TokenId],
    rng: &mut R,
) -> (Vec<TokenId>, Vec<bool>) {
    let mut corrupted = original.to_vec();
    let mut flags = vec![false; original.len()];
    for (r, &p) in positions.iter().enumerate() {
        let probs = softmax(logits.row(r));
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut choice = probs.len() - 1;
        for (k, &q) in probs.iter().enumerate() {
            acc += q;
            if u < acc {
                choice = k;
                break;
            }
        }
        corrupted[p] = choice as TokenId;
        flags[p] = corrupted[p] != original[p];
    }
    (corrupted, flags)
}

/// The masked-length sequence before corruption: inputs with every labelled
/// position restored (phrase slots hold the phrase id).
pub fn uncorrupted(ex: &MaskedExample) -> Vec<TokenId> {
    ex.input_ids
        .iter()
        .zip(&ex.labels)
        .map(|(&t, &l)| if l == IGNORE_LABEL { t } else { l as TokenId })
        .collect()
}

/// Loss and gradient of one batch. The discriminator and span-boundary
/// terms are skipped entirely when their weight is zero.
pub fn batch_gradient(model: &Model, batch: &[&MaskedExample], weights: &LossWeights, rng: &mut ChaCha8Rng) -> Result<(LossReport, Model)> {
    let max_span = model.sbo.max_span();
    let targets: Vec<_> = batch.iter().map(|ex| sbo_targets(ex, max_span)).collect();
    let p_total: usize = batch.iter().map(|ex| ex.masked_positions().len()).sum();
    let s_total: usize = targets.iter().map(Vec::len).sum();
    let t_total: usize = batch.iter().map(|ex| ex.len()).sum();
    let mut grads = model.zeroed();
    let (mut l_mlm, mut l_sbo, mut l_disc) = (0.0, 0.0, 0.0);
    let gen = &model.generator;
    for (ex, targets) in batch.iter().zip(&targets) {
        let positions = ex.masked_positions();
        let labels: Vec<usize> = positions.iter().map(|&p| ex.labels[p] as usize).collect();
        let (h, cache) = gen.forward(&ex.input_ids)?;
        let logits = gen.logits(&h, &positions);
        let mut dstates = Matrix::zeros(h.rows(), h.cols());
        if !positions.is_empty() {
            let w = positions.len() as f64 / p_total as f64;
            let (loss, mut dlogits) = mlm_loss(&logits, &labels)?;
            l_mlm += w * loss;
            dlogits.scale(w);
            gen.logits_backward(&h, &positions, &dlogits, &mut grads.generator, &mut dstates);
        }
        if weights.lambda1 != 0.0 && !targets.is_empty() {
            let w = targets.len() as f64 / s_total as f64;
            let out = sbo_loss(targets, &h, &model.sbo, &gen.encoder.tok_emb)?;
            l_sbo += w * out.loss;
            let k = weights.lambda1 * w;
            crate::linalg::axpy(k, out.grads.states.data(), dstates.data_mut());
            grads.sbo.add_scaled(k, &out.grads.params);
            crate::linalg::axpy(k, out.grads.embedding.data(), grads.generator.encoder.tok_emb.data_mut());
        }
        gen.encoder.backward(&cache, &dstates, &mut grads.generator.encoder);
        if weights.lambda2 != 0.0 {
            let (corrupted, flags) = sample_replacements(&logits, &positions, &uncorrupted(ex), rng);
            let (dlogits, hd, dcache) = model.discriminator.forward(&corrupted)?;
            let w = ex.len() as f64 / t_total as f64;
            let (loss, mut g) = disc_loss_logits(&dlogits, &flags)?;
            l_disc += w * loss;
            g.iter_mut().for_each(|v| *v *= weights.lambda2 * w);
            model.discriminator.backward(&hd, &dcache, &g, &mut grads.discriminator);
        }
    }
    Ok((LossReport::new(l_mlm, l_sbo, l_disc, weights)?, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub stage: Stage,
    pub steps: usize,
    /// Mean of the per-step reports.
    pub loss: LossReport,
    pub step_losses: Vec<LossReport>,
    pub perplexity: PerplexityReport,
    pub phrase_collapses: usize,
    pub skipped_examples: usize,
    pub phrase_probability: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub epoch: usize,
    pub step: usize,
}

#[derive(Debug, Clone)]
pub struct PretrainRun {
    /// The last state whose losses were all finite.
    pub state: TrainState,
    pub baseline: PerplexityReport,
    pub baseline_phrase_probability: Option<f64>,
    pub epochs: Vec<EpochReport>,
    pub diverged: Option<Divergence>,
}

/// Fixed validation masking: word-and-phrase stage, seeded from the
/// "validation" stream.
pub fn validation_set(masker: &Masker, sequences: &[Vec<TokenId>], seed: u64) -> Vec<MaskedExample> {
    mask_batch(masker, sequences, Stage::WordAndPhrase, stream_seed(seed, "validation"))
        .into_iter()
        .filter_map(|r| match r {
            MaskRecord::Example(e) => Some(e),
            MaskRecord::Error { error } => {
                log::warn!("validation example skipped: {error}");
                None
            }
        })
        .collect()
}

fn check_lengths(sequences: &[Vec<TokenId>], max_len: usize) -> Result<()> {
    if let Some((i, s)) = sequences.iter().enumerate().find(|(_, s)| s.len() > max_len) {
        return Err(Error::contract(format!("sequence {i} has {} tokens, max_len is {max_len}", s.len())));
    }
    Ok(())
}

/// Train from a fresh state for `config.epochs` epochs.
pub fn pretrain(train: &[Vec<TokenId>], valid: &[MaskedExample], masker: &Masker, config: &PretrainConfig) -> Result<PretrainRun> {
    let state = TrainState::init(config, masker.vocab().total_size(), masker.policy().max_span)?;
    pretrain_from(state, train, valid, masker)
}

pub fn pretrain_from(mut state: TrainState, train: &[Vec<TokenId>], valid: &[MaskedExample], masker: &Masker) -> Result<PretrainRun> {
    let config = state.config.clone();
    config.validate()?;
    check_lengths(train, config.encoder.max_len.min(config.generator_config().max_len))?;
    let baseline = perplexity(&state.model.generator, valid, None)?;
    let baseline_phrase_probability = phrase_probability(&state.model.generator, valid)?;
    let mut run = PretrainRun {
        state: state.clone(),
        baseline,
        baseline_phrase_probability,
        epochs: Vec::new(),
        diverged: None,
    };
    while state.epoch < config.epochs {
        let epoch = state.epoch;
        let stage = stage_schedule(epoch, config.epochs, &config.stage_split)?;
        let records = mask_batch(masker, train, stage, indexed_seed(stream_seed(config.seed, "masking"), epoch as u64));
        let mut examples = Vec::with_capacity(records.len());
        let mut skipped = 0;
        for r in records {
            match r {
                MaskRecord::Example(e) => examples.push(e),
                MaskRecord::Error { error } => {
                    log::warn!("epoch {epoch}: example skipped: {error}");
                    skipped += 1;
                }
            }
        }
        let phrase_collapses = examples.iter().map(MaskedExample::phrase_collapses).sum();
        let mut order: Vec<usize> = (0..examples.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng_from_seed(indexed_seed(stream_seed(config.seed, "shuffle"), epoch as u64)));
        let mut sample_rng = rng_from_seed(indexed_seed(stream_seed(config.seed, "sampling"), epoch as u64));
        let mut step_losses = Vec::new();
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&MaskedExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let outcome = batch_gradient(&state.model, &batch, &config.weights, &mut sample_rng);
            let (report, grads) = match outcome {
                Ok(ok) if grads_finite(&ok.1) => ok,
                Ok(_) | Err(Error::NonFinite { .. }) => {
                    log::error!("loss diverged at epoch {epoch}, step {step}");
                    run.diverged = Some(Divergence { epoch, step });
                    run.state = state;
                    return Ok(run);
                }
                Err(e) => return Err(e),
            };
            let params: Vec<&mut [f64]> = state.model.tensors_mut().into_iter().map(|(_, t)| t).collect();
            let g: Vec<&[f64]> = grads.tensors().into_iter().map(|(_, t)| t).collect();
            state.adam.update(params, g)?;
            step_losses.push(report);
        }
        state.epoch += 1;
        let ppl = perplexity(&state.model.generator, valid, None)?;
        let report = EpochReport {
            epoch,
            stage,
            steps: step_losses.len(),
            loss: mean_report(&step_losses, &config.weights)?,
            step_losses,
            perplexity: ppl,
            phrase_collapses,
            skipped_examples: skipped,
            phrase_probability: phrase_probability(&state.model.generator, valid)?,
        };
        log::info!(
            "epoch {} ({:?}): loss {:.4} (mlm {:.4}, sbo {:.4}, disc {:.4}), ppl {:.3}",
            epoch,
            stage,
            report.loss.total,
            report.loss.l_mlm,
            report.loss.l_sbo,
            report.loss.l_disc,
            ppl.token_level
        );
        run.epochs.push(report);
        run.state = state.clone();
    }
    Ok(run)
}

fn grads_finite(m: &Model) -> bool {
    m.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
}

fn mean_report(steps: &[LossReport], weights: &LossWeights) -> Result<LossReport> {
    if steps.is_empty() {
        return Ok(LossReport::default());
    }
    let n = steps.len() as f64;
    let mean = |f: fn(&LossReport) -> f64| steps.iter().map(f).sum::<f64>() / n;
    LossReport::new(mean(|r| r.l_mlm), mean(|r| r.l_sbo), mean(|r| r.l_disc), weights)
}
