use super::config::{ModelConfig, Objective, TokenSpace};
use super::state::EncoderState;
use crate::error::{Error, Result};
use crate::numerics::{HeadLayout, Real, Tape, Tensor, Var};

/// One sequence ready for the encoder: tokens, positional slots, the
/// attention permission matrix and the rows exchanged between layers.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderInput {
    pub tokens: Vec<usize>,
    pub positions: Vec<usize>,
    /// Row-major `len × len`; `allowed[i*len + j]` lets query `i` see key `j`.
    pub allowed: Vec<bool>,
    /// Groups of rows summed after every layer (bottleneck exchange).
    pub mix_groups: Vec<Vec<usize>>,
}

impl EncoderInput {
    /// Plain left-aligned sequence. Padding tokens neither attend nor are
    /// attended to; in causal mode query `i` sees keys `j <= i`.
    pub fn sequence(tokens: &[usize], objective: Objective, space: &TokenSpace) -> Self {
        let n = tokens.len();
        let live: Vec<bool> = tokens.iter().map(|&t| t != space.pad()).collect();
        let mut allowed = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                let ordered = match objective {
                    Objective::CausalNextItem => j <= i,
                    Objective::MaskedToken => true,
                };
                allowed[i * n + j] = live[i] && live[j] && ordered;
            }
        }
        Self { tokens: tokens.to_vec(), positions: (0..n).collect(), allowed, mix_groups: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Several [`EncoderInput`]s right-padded to a common length and stacked.
#[derive(Clone, Debug)]
pub struct EncoderBatch {
    pub batch: usize,
    pub seq: usize,
    pub tokens: Vec<usize>,
    pub positions: Vec<usize>,
    pub allowed: Vec<bool>,
    pub mix_groups: Vec<Vec<usize>>,
}

impl EncoderBatch {
    pub fn stack(inputs: &[EncoderInput], pad: usize) -> Self {
        let seq = inputs.iter().map(EncoderInput::len).max().unwrap_or(0);
        let batch = inputs.len();
        let mut tokens = vec![pad; batch * seq];
        let mut positions = vec![0; batch * seq];
        let mut allowed = vec![false; batch * seq * seq];
        let mut mix_groups = Vec::new();
        for (b, inp) in inputs.iter().enumerate() {
            let n = inp.len();
            tokens[b * seq..b * seq + n].copy_from_slice(&inp.tokens);
            positions[b * seq..b * seq + n].copy_from_slice(&inp.positions);
            for i in 0..n {
                let dst = (b * seq + i) * seq;
                allowed[dst..dst + n].copy_from_slice(&inp.allowed[i * n..(i + 1) * n]);
            }
            for g in &inp.mix_groups {
                mix_groups.push(g.iter().map(|&r| b * seq + r).collect());
            }
        }
        Self { batch, seq, tokens, positions, allowed, mix_groups }
    }

    pub fn single(input: &EncoderInput, pad: usize) -> Self {
        Self::stack(std::slice::from_ref(input), pad)
    }

    fn softmax_mask<T: Real>(&self, heads: usize) -> Tensor<T> {
        let l = self.seq;
        let mut data = vec![T::neg_infinity(); self.batch * heads * l * l];
        for b in 0..self.batch {
            for h in 0..heads {
                for i in 0..l {
                    let src = (b * l + i) * l;
                    let dst = ((b * heads + h) * l + i) * l;
                    for j in 0..l {
                        if self.allowed[src + j] {
                            data[dst + j] = T::zero();
                        }
                    }
                }
            }
        }
        Tensor::new(vec![self.batch * heads * l, l], data).expect("sized")
    }
}

/// Tape handles produced by [`encode`].
#[derive(Clone, Debug)]
pub struct Encoded {
    /// Final hidden states, `(batch·seq) × r`.
    pub hidden: Var,
    /// Post-softmax attention per layer, `(batch·heads·seq) × seq`.
    pub attention: Vec<Var>,
    /// Scaled pre-softmax scores per layer, same layout as `attention`.
    pub scores: Vec<Var>,
    pub layout: HeadLayout,
}

/// Records the encoder forward pass on `tape`, which must borrow `state.params`.
pub fn encode<T: Real>(tape: &mut Tape<'_, T>, state: &EncoderState<T>, batch: &EncoderBatch) -> Result<Encoded> {
    let cfg = &state.config;
    let table_rows = cfg.tokens().table_rows();
    if let Some(&bad) = batch.tokens.iter().find(|&&t| t >= table_rows) {
        return Err(Error::OutOfVocabulary { id: bad, size: table_rows });
    }
    if let Some(&p) = batch.positions.iter().max() {
        if p >= cfg.positions() {
            return Err(Error::Shape(format!("position {p} exceeds the {} positional slots", cfg.positions())));
        }
    }
    let layout = HeadLayout { batch: batch.batch, seq: batch.seq, heads: cfg.num_heads };
    let mask = batch.softmax_mask::<T>(cfg.num_heads);
    let scale = T::one() / T::lit(cfg.head_dim() as f64).sqrt();

    let items = tape.param(state.item_embedding);
    let pos = tape.param(state.position_embedding);
    let h = tape.gather(items, &batch.tokens)?;
    let p = tape.gather(pos, &batch.positions)?;
    let mut x = tape.add(h, p)?;
    let mut attention = Vec::with_capacity(state.layers.len());
    let mut raw = Vec::with_capacity(state.layers.len());
    for lp in &state.layers {
        let wq = tape.param(lp.w_query);
        let wk = tape.param(lp.w_key);
        let wv = tape.param(lp.w_value);
        let q = tape.matmul(x, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;
        let scores = tape.head_scores(q, k, layout, scale)?;
        let probs = tape.row_softmax_padded(scores, &mask)?;
        attention.push(probs);
        raw.push(scores);
        let mixed = tape.head_apply(probs, v, layout)?;

        let w1 = tape.param(lp.ffn_in);
        let b1 = tape.param(lp.ffn_in_bias);
        let w2 = tape.param(lp.ffn_out);
        let b2 = tape.param(lp.ffn_out_bias);
        let f = tape.matmul(mixed, w1)?;
        let f = tape.add_row(f, b1)?;
        let f = tape.gelu(f)?;
        let f = tape.matmul(f, w2)?;
        let f = tape.add_row(f, b2)?;
        let res = tape.add(f, x)?;
        let g = tape.param(lp.norm_gain);
        let bn = tape.param(lp.norm_bias);
        x = tape.layer_norm(res, g, bn)?;
        if !batch.mix_groups.is_empty() {
            x = tape.mix_rows(x, &batch.mix_groups)?;
        }
    }
    Ok(Encoded { hidden: x, attention, scores: raw, layout })
}

/// Post-softmax attention of one sequence, indexed `[layer][head][i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTensor {
    pub layers: usize,
    pub heads: usize,
    pub len: usize,
    data: Vec<f64>,
}

impl AttentionTensor {
    pub fn new(layers: usize, heads: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != layers * heads * len * len {
            return Err(Error::Shape("attention tensor size".into()));
        }
        Ok(Self { layers, heads, len, data })
    }

    /// Every entry `1/len`: uniform rows over all keys, in every layer and head.
    pub fn uniform(layers: usize, heads: usize, len: usize) -> Self {
        let v = 1.0 / len as f64;
        Self { layers, heads, len, data: vec![v; layers * heads * len * len] }
    }

    #[inline]
    pub fn get(&self, layer: usize, head: usize, i: usize, j: usize) -> f64 {
        self.data[((layer * self.heads + head) * self.len + i) * self.len + j]
    }

    /// The `len × len` matrix of one layer and head.
    pub fn matrix(&self, layer: usize, head: usize) -> &[f64] {
        let n = self.len * self.len;
        let start = (layer * self.heads + head) * n;
        &self.data[start..start + n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Extracts sequence `b` of a batched encode.
    pub fn from_tape<T: Real>(tape: &Tape<'_, T>, enc: &Encoded, b: usize, len: usize) -> Self {
        Self::from_nodes(tape, &enc.attention, enc.layout, b, len)
    }

    /// Same as [`AttentionTensor::from_tape`] over any per-layer nodes laid
    /// out like the attention (e.g. [`Encoded::scores`]).
    pub fn from_nodes<T: Real>(tape: &Tape<'_, T>, nodes: &[Var], layout: HeadLayout, b: usize, len: usize) -> Self {
        let l = layout.seq;
        let heads = layout.heads;
        let mut data = Vec::with_capacity(nodes.len() * heads * len * len);
        for &layer in nodes {
            let t = tape.value(layer);
            for h in 0..heads {
                for i in 0..len {
                    let row = t.row((b * heads + h) * l + i);
                    data.extend(row[..len].iter().map(|x| x.as_f64()));
                }
            }
        }
        Self { layers: nodes.len(), heads, len, data }
    }
}

/// Untaped result of encoding one sequence.
#[derive(Clone, Debug)]
pub struct ForwardOutput<T: Real = f64> {
    /// `len × r` final hidden states.
    pub hidden: Tensor<T>,
    pub attention: AttentionTensor,
    /// Row of `hidden` selected by the readout.
    pub user_vector: Vec<T>,
}

/// Encodes one sequence and applies the readout for `cfg.objective`.
pub fn forward<T: Real>(state: &EncoderState<T>, input: &EncoderInput, readout_row: usize) -> Result<ForwardOutput<T>> {
    let pad = state.config.tokens().pad();
    let batch = EncoderBatch::single(input, pad);
    let mut tape = Tape::with_params(&state.params);
    let enc = encode(&mut tape, state, &batch)?;
    let hidden = tape.value(enc.hidden).clone();
    let attention = AttentionTensor::from_tape(&tape, &enc, 0, input.len());
    if readout_row >= hidden.rows() {
        return Err(Error::Shape(format!("readout row {readout_row} out of {}", hidden.rows())));
    }
    let user_vector = hidden.row(readout_row).to_vec();
    Ok(ForwardOutput { hidden, attention, user_vector })
}

/// Position whose hidden state represents the user: the last non-padding
/// token in causal mode, the last masked token in masked mode.
pub fn readout_index(tokens: &[usize], objective: Objective, space: &TokenSpace) -> Result<usize> {
    match objective {
        Objective::CausalNextItem => tokens
            .iter()
            .rposition(|&t| t != space.pad())
            .ok_or_else(|| Error::Shape("sequence has no real tokens".into())),
        Objective::MaskedToken => tokens.iter().rposition(|&t| t == space.mask()).ok_or(Error::NoMaskedPosition),
    }
}

/// `h*` for a single encoded sequence.
pub fn readout<T: Real>(hidden: &Tensor<T>, tokens: &[usize], objective: Objective, space: &TokenSpace) -> Result<Vec<T>> {
    let idx = readout_index(tokens, objective, space)?;
    Ok(hidden.row(idx).to_vec())
}

/// Convenience for tests and tools: encode a token list under `cfg.objective`.
pub fn encode_tokens<T: Real>(state: &EncoderState<T>, tokens: &[usize]) -> Result<ForwardOutput<T>> {
    let cfg: &ModelConfig = &state.config;
    let space = cfg.tokens();
    let input = EncoderInput::sequence(tokens, cfg.objective, &space);
    let row = readout_index(tokens, cfg.objective, &space)?;
    forward(state, &input, row)
}
