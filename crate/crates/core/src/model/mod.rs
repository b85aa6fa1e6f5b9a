//! Transformer sequence encoder, readout and recommendation loss.

pub mod checkpoint;
mod config;
mod encoder;
mod loss;
mod state;

pub use config::{ModelConfig, Objective, TokenSpace};
pub use encoder::{
    encode, encode_tokens, forward, readout, readout_index, AttentionTensor, Encoded, EncoderBatch, EncoderInput,
    ForwardOutput,
};
pub use loss::{recommendation_loss, static_combined_loss};
pub use state::{EncoderState, LayerParams};
