//! Bottleneck-token layout: every domain is encoded in its own block
//! `[IB_1..IB_T ; items]` and blocks only exchange information through the
//! summed bottleneck states.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::domain_map::DomainMap;
use super::score::weighted_attention_mass;
use crate::error::{Error, Result};
use crate::model::{AttentionTensor, EncoderInput, Objective, TokenSpace};
use crate::numerics::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IbBlock {
    pub domain: usize,
    /// First row of the block; the bottleneck tokens come first.
    pub start: usize,
    /// Number of item rows after the bottleneck tokens.
    pub items: usize,
}

impl IbBlock {
    pub fn ib_rows(&self, tokens: usize) -> Range<usize> {
        self.start..self.start + tokens
    }

    pub fn item_rows(&self, tokens: usize) -> Range<usize> {
        self.start + tokens..self.start + tokens + self.items
    }

    pub fn len(&self, tokens: usize) -> usize {
        tokens + self.items
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IbLayout {
    /// Bottleneck tokens per domain.
    pub tokens: usize,
    pub blocks: Vec<IbBlock>,
}

impl IbLayout {
    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(|b| b.len(self.tokens)).sum()
    }

    pub fn content_len(&self) -> usize {
        self.blocks.iter().map(|b| b.items).sum()
    }

    pub fn block_of(&self, row: usize) -> Option<usize> {
        self.blocks.iter().position(|b| (b.start..b.start + b.len(self.tokens)).contains(&row))
    }

    /// Rows summed by the combine step, one group per bottleneck slot.
    pub fn combine_groups(&self) -> Vec<Vec<usize>> {
        if self.blocks.len() < 2 {
            return Vec::new();
        }
        (0..self.tokens).map(|t| self.blocks.iter().map(|b| b.start + t).collect()).collect()
    }

    /// Domain of every row; bottleneck rows carry no domain.
    pub fn domain_map(&self) -> DomainMap {
        let mut d = vec![None; self.total_len()];
        for b in &self.blocks {
            for r in b.item_rows(self.tokens) {
                d[r] = Some(b.domain);
            }
        }
        DomainMap::new(d)
    }

    /// Row-major pair weights selecting item-row to same-block bottleneck-column
    /// entries.
    pub fn item_to_ib_pairs(&self) -> Vec<f64> {
        let n = self.total_len();
        let mut w = vec![0.0; n * n];
        for b in &self.blocks {
            for i in b.item_rows(self.tokens) {
                for j in b.ib_rows(self.tokens) {
                    w[i * n + j] = 1.0;
                }
            }
        }
        w
    }
}

/// A bottleneck-layout sequence ready for the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct IbSequence {
    pub input: EncoderInput,
    pub layout: IbLayout,
    /// Row of each input interaction, in the original order.
    pub rows: Vec<usize>,
}

impl IbSequence {
    /// Row holding the most recent interaction.
    pub fn last_row(&self) -> usize {
        *self.rows.last().expect("non-empty")
    }
}

/// Lays out `(token, domain)` pairs into per-domain blocks, ordered by domain id.
/// Within a block item rows keep their relative order. `combine` enables the
/// per-layer exchange of bottleneck states.
pub fn build_ib_input(
    seq: &[(usize, usize)],
    tokens: usize,
    space: &TokenSpace,
    objective: Objective,
    combine: bool,
) -> Result<IbSequence> {
    if tokens < 1 {
        return Err(Error::config("model.ib_tokens", "must be at least 1"));
    }
    if seq.is_empty() {
        return Err(Error::Shape("empty sequence".into()));
    }
    let mut domains: Vec<usize> = seq.iter().map(|&(_, d)| d).collect();
    domains.sort_unstable();
    domains.dedup();
    let blocks: Vec<(usize, Vec<usize>)> = domains
        .iter()
        .map(|&d| (d, seq.iter().enumerate().filter(|(_, &(_, dd))| dd == d).map(|(k, _)| k).collect()))
        .collect();
    build_blocks(seq, &blocks, tokens, space, objective, combine)
}

/// Like [`build_ib_input`] with an explicit per-domain list of sequences.
/// Every listed domain must contribute at least one item.
pub fn build_ib_batch(
    per_domain: &[(usize, Vec<usize>)],
    tokens: usize,
    space: &TokenSpace,
    objective: Objective,
    combine: bool,
) -> Result<IbSequence> {
    if tokens < 1 {
        return Err(Error::config("model.ib_tokens", "must be at least 1"));
    }
    let mut seq = Vec::new();
    let mut blocks = Vec::new();
    for (d, items) in per_domain {
        if items.is_empty() {
            return Err(Error::EmptyDomainBlock(*d));
        }
        blocks.push((*d, (seq.len()..seq.len() + items.len()).collect()));
        seq.extend(items.iter().map(|&i| (i, *d)));
    }
    build_blocks(&seq, &blocks, tokens, space, objective, combine)
}

fn build_blocks(
    seq: &[(usize, usize)],
    blocks: &[(usize, Vec<usize>)],
    tokens: usize,
    space: &TokenSpace,
    objective: Objective,
    combine: bool,
) -> Result<IbSequence> {
    let mut layout = IbLayout { tokens, blocks: Vec::new() };
    let mut toks = Vec::new();
    let mut positions = Vec::new();
    let mut rows = vec![0; seq.len()];
    for (d, members) in blocks {
        if *d >= space.domains {
            return Err(Error::UnknownDomain(d.to_string()));
        }
        let start = toks.len();
        for t in 0..tokens {
            toks.push(space.ib(*d, t));
            positions.push(t);
        }
        for (k, &m) in members.iter().enumerate() {
            rows[m] = toks.len();
            toks.push(seq[m].0);
            positions.push(tokens + k);
        }
        layout.blocks.push(IbBlock { domain: *d, start, items: members.len() });
    }
    let n = toks.len();
    let mut allowed = vec![false; n * n];
    for b in &layout.blocks {
        let ib = b.ib_rows(tokens);
        let items = b.item_rows(tokens);
        for i in ib.clone() {
            for j in b.start..items.end {
                allowed[i * n + j] = true;
            }
        }
        for i in items.clone() {
            for j in ib.clone() {
                allowed[i * n + j] = true;
            }
            for j in items.clone() {
                allowed[i * n + j] = match objective {
                    Objective::CausalNextItem => j <= i,
                    Objective::MaskedToken => true,
                };
            }
        }
    }
    let mix_groups = if combine { layout.combine_groups() } else { Vec::new() };
    Ok(IbSequence { input: EncoderInput { tokens: toks, positions, allowed, mix_groups }, layout, rows })
}

/// Item-to-bottleneck attention mass summed over domains, averaged over
/// layers and heads. Works on post-softmax attention or on raw scores.
pub fn ib_cross_domain_score(attn: &AttentionTensor, layout: &IbLayout) -> Result<f64> {
    if attn.len != layout.total_len() {
        return Err(Error::Shape(format!(
            "attention over {} positions, layout over {}",
            attn.len,
            layout.total_len()
        )));
    }
    Ok(weighted_attention_mass(attn, &layout.item_to_ib_pairs()))
}

/// Element-wise sum of every domain's `T × r` bottleneck states.
pub fn combine_ib<T: Real>(states: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = states.first().ok_or_else(|| Error::Shape("no bottleneck states".into()))?;
    let mut out = first.clone();
    for s in &states[1..] {
        if s.shape() != out.shape() {
            return Err(Error::Shape("bottleneck states differ in shape".into()));
        }
        out.add_assign(s);
    }
    Ok(out)
}

/// Writes the combined bottleneck states back into every block of `hidden`.
pub fn combine_ib_rows<T: Real>(hidden: &mut Tensor<T>, layout: &IbLayout) -> Result<()> {
    let states = layout
        .blocks
        .iter()
        .map(|b| {
            let rows: Vec<Vec<T>> = b.ib_rows(layout.tokens).map(|r| hidden.row(r).to_vec()).collect();
            Tensor::from_rows(&rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let sum = combine_ib(&states)?;
    for b in &layout.blocks {
        for (t, r) in b.ib_rows(layout.tokens).enumerate() {
            hidden.row_mut(r).copy_from_slice(sum.row(t));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> TokenSpace {
        TokenSpace { items: 10, domains: 2, ib_per_domain: 1 }
    }

    #[test]
    fn two_blocks_of_four_and_three() {
        let s = build_ib_batch(&[(0, vec![1, 2, 3]), (1, vec![7, 8])], 1, &space(), Objective::MaskedToken, true)
            .unwrap();
        assert_eq!(s.layout.total_len(), 7);
        let lens: Vec<usize> = s.layout.blocks.iter().map(|b| b.len(1)).collect();
        assert_eq!(lens, vec![4, 3]);
        assert_eq!(s.input.tokens, vec![12, 1, 2, 3, 13, 7, 8]);
        assert_eq!(s.input.positions, vec![0, 1, 2, 3, 0, 1, 2]);
        assert_eq!(s.input.mix_groups, vec![vec![0, 4]]);
    }

    #[test]
    fn blocks_never_see_each_other() {
        let seq = [(1, 0), (7, 1), (2, 0), (8, 1), (3, 0)];
        let s = build_ib_input(&seq, 2, &TokenSpace { ib_per_domain: 2, ..space() }, Objective::CausalNextItem, false)
            .unwrap();
        let n = s.layout.total_len();
        for i in 0..n {
            for j in 0..n {
                if s.layout.block_of(i) != s.layout.block_of(j) {
                    assert!(!s.input.allowed[i * n + j]);
                }
            }
        }
        assert_eq!(s.rows, vec![2, 7, 3, 8, 4]);
        assert_eq!(s.last_row(), 4);
    }

    #[test]
    fn errors() {
        assert!(build_ib_batch(&[(0, vec![1])], 0, &space(), Objective::MaskedToken, true).is_err());
        assert!(matches!(
            build_ib_batch(&[(0, vec![1]), (1, vec![])], 1, &space(), Objective::MaskedToken, true),
            Err(Error::EmptyDomainBlock(1))
        ));
    }

    #[test]
    fn one_domain_two_items_uniform() {
        let s = build_ib_batch(&[(0, vec![1, 2])], 1, &space(), Objective::MaskedToken, false).unwrap();
        let a = AttentionTensor::uniform(1, 1, 3);
        let v = ib_cross_domain_score(&a, &s.layout).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        let two = build_ib_batch(&[(0, vec![1, 2]), (1, vec![5, 6])], 1, &space(), Objective::MaskedToken, false)
            .unwrap();
        // block-uniform rows over 3 keys each
        let n = 6;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if two.layout.block_of(i) == two.layout.block_of(j) {
                    data[i * n + j] = 1.0 / 3.0;
                }
            }
        }
        let a2 = AttentionTensor::new(1, 1, n, data).unwrap();
        assert!((ib_cross_domain_score(&a2, &two.layout).unwrap() - 2.0 * v).abs() < 1e-12);
        assert!(ib_cross_domain_score(&a, &two.layout).is_err());
    }

    #[test]
    fn combine_sums() {
        let v = Tensor::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let neg = v.map(|x| -x);
        assert_eq!(combine_ib(&[v.clone()]).unwrap(), v);
        assert_eq!(combine_ib(&[v.clone(), neg.clone()]).unwrap().data(), &[0.0, 0.0]);
        let w = Tensor::from_rows(&[vec![0.5, 4.0]]).unwrap();
        assert_eq!(
            combine_ib(&[v.clone(), w.clone(), neg.clone()]).unwrap(),
            combine_ib(&[neg, v, w]).unwrap()
        );
    }
}
