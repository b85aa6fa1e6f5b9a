use serde::{Deserialize, Serialize};

use super::domain_map::DomainMap;
use crate::error::{Error, Result};
use crate::model::{AttentionTensor, Encoded};
use crate::numerics::{Real, Tape, Var};

/// Row-major `len × len` weights: 1 where both positions are items of
/// different domains, 0 elsewhere (including any non-item position).
pub fn cross_domain_pairs(dom: &DomainMap) -> Vec<f64> {
    let n = dom.len();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        let Some(di) = dom.get(i) else { continue };
        for j in 0..n {
            if let Some(dj) = dom.get(j) {
                if di != dj {
                    w[i * n + j] = 1.0;
                }
            }
        }
    }
    w
}

/// Attention mass selected by `pairs`, summed over positions and averaged
/// over layers and heads.
pub fn weighted_attention_mass(attn: &AttentionTensor, pairs: &[f64]) -> f64 {
    let mut total = 0.0;
    for l in 0..attn.layers {
        for h in 0..attn.heads {
            total += attn.matrix(l, h).iter().zip(pairs).map(|(a, w)| a * w).sum::<f64>();
        }
    }
    total / (attn.layers * attn.heads) as f64
}

/// Cross-domain attention score `a_cd` of one sequence.
pub fn cross_domain_attention_score(attn: &AttentionTensor, dom: &DomainMap) -> Result<f64> {
    if attn.len != dom.len() {
        return Err(Error::Shape(format!("attention over {} positions, domain map over {}", attn.len, dom.len())));
    }
    Ok(weighted_attention_mass(attn, &cross_domain_pairs(dom)))
}

/// Complementary mass: attention between items of the same domain.
pub fn single_domain_attention_score(attn: &AttentionTensor, dom: &DomainMap) -> Result<f64> {
    if attn.len != dom.len() {
        return Err(Error::Shape("attention/domain map length mismatch".into()));
    }
    let n = dom.len();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if let (Some(a), Some(b)) = (dom.get(i), dom.get(j)) {
                if a == b {
                    w[i * n + j] = 1.0;
                }
            }
        }
    }
    Ok(weighted_attention_mass(attn, &w))
}

/// How per-sequence scores are turned into the batch loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdAggregate {
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdLossConfig {
    /// Divide each sequence's score by its number of item positions.
    pub normalize_by_length: bool,
    pub aggregate: CdAggregate,
}

impl Default for CdLossConfig {
    fn default() -> Self {
        Self { normalize_by_length: true, aggregate: CdAggregate::Mean }
    }
}

/// Records the batch attention loss on the tape. `pairs[b]` is the
/// `seq × seq` pair-weight matrix of sequence `b` (padded to the batch length)
/// and `content[b]` its number of item positions.
pub fn attention_mass_loss<T: Real>(
    tape: &mut Tape<'_, T>,
    enc: &Encoded,
    pairs: &[Vec<f64>],
    content: &[usize],
    cfg: CdLossConfig,
) -> Result<Var> {
    attention_mass_loss_on(tape, &enc.attention, enc, pairs, content, cfg)
}

/// Same as [`attention_mass_loss`] over arbitrary per-layer nodes with the
/// attention layout (used for the raw-score variant).
pub fn attention_mass_loss_on<T: Real>(
    tape: &mut Tape<'_, T>,
    nodes: &[Var],
    enc: &Encoded,
    pairs: &[Vec<f64>],
    content: &[usize],
    cfg: CdLossConfig,
) -> Result<Var> {
    let lay = enc.layout;
    let l = lay.seq;
    if pairs.len() != lay.batch || content.len() != lay.batch {
        return Err(Error::Shape("one pair matrix per sequence required".into()));
    }
    let norm = (nodes.len() * lay.heads) as f64;
    let batch_coef = match cfg.aggregate {
        CdAggregate::Mean => 1.0 / lay.batch as f64,
        CdAggregate::Sum => 1.0,
    };
    let mut w = vec![T::zero(); lay.batch * lay.heads * l * l];
    for (b, p) in pairs.iter().enumerate() {
        if p.len() != l * l {
            return Err(Error::Shape(format!("pair matrix of sequence {b} has wrong size")));
        }
        let len_coef = if cfg.normalize_by_length { 1.0 / content[b].max(1) as f64 } else { 1.0 };
        let coef = batch_coef * len_coef / norm;
        for h in 0..lay.heads {
            let dst = (b * lay.heads + h) * l * l;
            for (o, &pv) in w[dst..dst + l * l].iter_mut().zip(p) {
                *o = T::lit(pv * coef);
            }
        }
    }
    let mut terms = Vec::with_capacity(nodes.len());
    for &node in nodes {
        let s = tape.weighted_sum(node, &w)?;
        terms.push((s, T::one()));
    }
    tape.lin_comb(&terms)
}

/// Pads a `len × len` pair matrix to `seq × seq` with zeros.
pub fn pad_pairs(pairs: &[f64], len: usize, seq: usize) -> Vec<f64> {
    let mut out = vec![0.0; seq * seq];
    for i in 0..len {
        out[i * seq..i * seq + len].copy_from_slice(&pairs[i * len..(i + 1) * len]);
    }
    out
}
