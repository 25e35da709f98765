//! Domain-adaptive masked language model pretraining at desk scale.
//!
//! The crate covers the pretraining mechanics of a financial language model:
//! a term [`lexicon`] with phrase matching and vocabulary augmentation,
//! preferential and span [`masking`], the pretraining and fine-tuning
//! [`objectives`] with hand-derived gradients, a small transformer
//! [`tinymodel`] to exercise them end to end, and the [`metrics`] used to
//! score downstream tasks. A [`sweep`] harness runs the masking ablations.

pub mod corpus;
pub mod error;
pub mod lexicon;
pub mod linalg;
pub mod masking;
pub mod metrics;
pub mod objectives;
pub mod rng;
pub mod selftest;
pub mod sweep;
pub mod tinymodel;
pub mod tokenizer;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/lexicon.md")]
pub mod book_lexicon {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/masking.md")]
pub mod book_masking {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/objectives.md")]
pub mod book_objectives {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/tinymodel.md")]
pub mod book_tinymodel {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod book_metrics {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod book_cli {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/sweeps.md")]
pub mod book_sweeps {}
