//! Domain bookkeeping, cross-domain attention scores and the bottleneck-token
//! layout.

mod domain_map;
mod ib;
mod score;

pub use domain_map::{stitch, DomainMap, Stamped};
pub use ib::{
    build_ib_batch, build_ib_input, combine_ib, combine_ib_rows, ib_cross_domain_score, IbBlock, IbLayout, IbSequence,
};
pub use score::{
    attention_mass_loss, attention_mass_loss_on, cross_domain_attention_score, cross_domain_pairs, pad_pairs,
    single_domain_attention_score, weighted_attention_mass, CdAggregate, CdLossConfig,
};
