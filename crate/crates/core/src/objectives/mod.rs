//! Pretraining and fine-tuning losses with analytic gradients.
//!
//! Every loss returns its value together with the gradient of that value, and
//! every gradient is verified against central differences by
//! [`grad_check`].

mod classify;
mod disc;
mod gradcheck;
mod mlm;
pub mod nn;
pub mod sbo;
mod total;

pub use classify::{ce_loss, ce_loss_logits, finetune_loss, scl_loss, SclOutput};
pub use disc::{disc_loss, disc_loss_logits, sigmoid, DISC_CLAMP};
pub use gradcheck::{grad_check, numeric_gradient, relative_error, GradCheck};
pub use mlm::mlm_loss;
pub use nn::{gelu, gelu_grad, LayerNorm};
pub use sbo::{sbo_loss, sbo_representation, sbo_targets, SboOutput, SboParams, SboTarget};
pub use total::{total_pretrain_loss, LossReport, LossWeights};
