//! Cross-domain sequential recommendation with Pareto-reconciled self-attention.
//!
//! A small transformer recommender is trained on user sequences that mix
//! several item domains. The attention mass that flows between items of
//! different domains is treated as a second objective next to the
//! recommendation loss, and every training step picks task weights from a
//! preference-aware min-norm problem over the two task gradients.
//!
//! Module map:
//!
//! * [`numerics`]: tensors and the reverse-mode tape.
//! * [`model`]: encoder, readout, recommendation loss, checkpoints.
//! * [`crossdomain`]: domain maps, the cross-domain attention score and the
//!   bottleneck-token variant.
//! * [`pareto`]: min-norm solvers, preference vectors, per-step reconciliation.
//! * [`data`]: TSV ingestion, synthetic generator, splits, corruption, batching.
//! * [`eval`]: ranking metrics, evaluation, strata and trajectory reports.
//! * [`train`]: optimizer, schedule, training loop and weight sweeps.

pub mod crossdomain;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod pareto;
pub mod train;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tape.md")]
    mod tape {}
    #[doc = include_str!("../../../book/src/cross_domain_attention.md")]
    mod cross_domain_attention {}
    #[doc = include_str!("../../../book/src/min_norm.md")]
    mod min_norm {}
    #[doc = include_str!("../../../book/src/preferences.md")]
    mod preferences {}
    #[doc = include_str!("../../../book/src/bottleneck_tokens.md")]
    mod bottleneck_tokens {}
    #[doc = include_str!("../../../book/src/data_and_evaluation.md")]
    mod data_and_evaluation {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
}
