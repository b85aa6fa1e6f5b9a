use rand::Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{rng, ParamGroup, ParamId, ParamSet, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerParams {
    pub w_query: ParamId,
    pub w_key: ParamId,
    pub w_value: ParamId,
    pub ffn_in: ParamId,
    pub ffn_in_bias: ParamId,
    pub ffn_out: ParamId,
    pub ffn_out_bias: ParamId,
    pub norm_gain: ParamId,
    pub norm_bias: ParamId,
}

/// All trainable tensors of the encoder, keyed by stable ids.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderState<T: Real = f64> {
    pub config: ModelConfig,
    pub params: ParamSet<T>,
    pub item_embedding: ParamId,
    pub position_embedding: ParamId,
    pub layers: Vec<LayerParams>,
}

fn uniform<T: Real>(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Tensor<T> {
    let a = std * 3f64.sqrt();
    let data = (0..rows * cols).map(|_| T::lit(rng.gen_range(-a..a))).collect();
    Tensor::new(vec![rows, cols], data).expect("sized")
}

impl<T: Real> EncoderState<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng(config.init_seed);
        let d = config.embed_dim;
        let hidden = d * config.ffn_multiplier;
        let mut params = ParamSet::new();
        let tokens = config.tokens();
        let item_embedding =
            params.register("item_embedding", ParamGroup::Embedding, uniform(&mut r, tokens.table_rows(), d, 0.5));
        let position_embedding =
            params.register("position_embedding", ParamGroup::Dense, uniform(&mut r, config.positions(), d, 0.1));
        let inv = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let mut reg = |name: &str, t: Tensor<T>| params.register(format!("layer{l}.{name}"), ParamGroup::Dense, t);
            layers.push(LayerParams {
                w_query: reg("w_query", uniform(&mut r, d, d, inv(d))),
                w_key: reg("w_key", uniform(&mut r, d, d, inv(d))),
                w_value: reg("w_value", uniform(&mut r, d, d, inv(d))),
                ffn_in: reg("ffn_in", uniform(&mut r, d, hidden, inv(d))),
                ffn_in_bias: reg("ffn_in_bias", Tensor::zeros(&[1, hidden])),
                ffn_out: reg("ffn_out", uniform(&mut r, hidden, d, inv(hidden))),
                ffn_out_bias: reg("ffn_out_bias", Tensor::zeros(&[1, d])),
                norm_gain: reg("norm_gain", Tensor::filled(&[1, d], T::one())),
                norm_bias: reg("norm_bias", Tensor::zeros(&[1, d])),
            });
        }
        Ok(Self { config, params, item_embedding, position_embedding, layers })
    }

    /// Rebuilds a state from named tensors, e.g. a loaded checkpoint.
    pub fn from_named(config: ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut state = Self::new(config)?;
        if named.len() != state.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                state.params.len(),
                named.len()
            )));
        }
        for (name, value) in named {
            let id = state
                .params
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {name}")))?;
            state.params.set(id, value)?;
        }
        Ok(state)
    }

    pub fn cast<U: Real>(&self) -> EncoderState<U> {
        EncoderState {
            config: self.config.clone(),
            params: self.params.cast(),
            item_embedding: self.item_embedding,
            position_embedding: self.position_embedding,
            layers: self.layers.clone(),
        }
    }

    /// Catalog item embeddings (excludes special tokens).
    pub fn item_vectors(&self) -> &Tensor<T> {
        self.params.get(self.item_embedding)
    }
}
