//! A small generator/discriminator encoder pair for end-to-end pretraining,
//! perplexity measurement, and classifier fine-tuning on toy corpora.

pub mod adam;
pub mod checkpoint;
pub mod encoder;
pub mod eval;
pub mod finetune;
pub mod layers;
pub mod model;
pub mod pretrain;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use encoder::{Encoder, EncoderConfig};
pub use eval::{perplexity, phrase_probability, DumpRecord, PerplexityReport};
pub use finetune::{finetune_classifier, FinetuneConfig, FINETUNE_CONFIG_VERSION, FinetuneReport, Pooling};
pub use layers::{Linear, Tensors};
pub use model::{Discriminator, Generator};
pub use pretrain::{
    batch_gradient, pretrain, pretrain_from, sample_replacements, uncorrupted, validation_set, Divergence, EpochReport, Model,
    PretrainConfig, PretrainRun, TrainState,
};
