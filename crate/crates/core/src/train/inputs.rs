use crate::crossdomain::{build_ib_input, cross_domain_pairs, pad_pairs, DomainMap};
use crate::data::{Catalog, Event, Example};
use crate::error::{Error, Result};
use crate::model::{EncoderBatch, EncoderInput, ModelConfig, Objective};

/// One encoder input with the bookkeeping the losses need.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub input: EncoderInput,
    /// `len × len` attention pair weights of the auxiliary loss.
    pub pairs: Vec<f64>,
    /// Item positions, used to normalise the auxiliary loss.
    pub content: usize,
    /// Domain of every row; `None` for bottleneck rows.
    pub domains: DomainMap,
    /// `(row, item)` supervised predictions.
    pub targets: Vec<(usize, usize)>,
}

/// Lays out `(token, domain)` pairs for `cfg`: a plain sequence, or domain
/// blocks with bottleneck tokens when `cfg.ib_tokens > 0`. `targets` are
/// given by input position and come back as rows.
pub fn prepare(cfg: &ModelConfig, seq: &[(usize, usize)], targets: &[(usize, usize)]) -> Result<Prepared> {
    let space = cfg.tokens();
    if cfg.ib_tokens == 0 {
        let tokens: Vec<usize> = seq.iter().map(|s| s.0).collect();
        let dom = DomainMap::from_domains(&seq.iter().map(|s| s.1).collect::<Vec<_>>());
        Ok(Prepared {
            input: EncoderInput::sequence(&tokens, cfg.objective, &space),
            pairs: cross_domain_pairs(&dom),
            content: seq.len(),
            domains: dom,
            targets: targets.to_vec(),
        })
    } else {
        let ib = build_ib_input(seq, cfg.ib_tokens, &space, cfg.objective, true)?;
        Ok(Prepared {
            pairs: ib.layout.item_to_ib_pairs(),
            content: ib.layout.content_len(),
            domains: ib.layout.domain_map(),
            targets: targets.iter().map(|&(p, item)| (ib.rows[p], item)).collect(),
            input: ib.input,
        })
    }
}

/// Training input for one example. With bottleneck tokens under the causal
/// objective only the final position is supervised: the bottleneck rows see
/// whole blocks, so earlier positions could read their own successors.
pub fn prepare_example(cfg: &ModelConfig, ex: &Example) -> Result<Prepared> {
    let seq: Vec<(usize, usize)> = ex.tokens.iter().copied().zip(ex.domains.iter().copied()).collect();
    let targets = if cfg.ib_tokens > 0 && cfg.objective == Objective::CausalNextItem {
        vec![*ex.targets.last().ok_or_else(|| Error::Shape("example without targets".into()))?]
    } else {
        ex.targets.clone()
    };
    prepare(cfg, &seq, &targets)
}

/// Scoring input for a history, or `None` if it is empty. The readout row
/// is the last interaction (causal) or an appended mask in `domain` (masked).
pub fn prepare_query(cfg: &ModelConfig, history: &[Event], domain: usize) -> Result<Option<(Prepared, usize)>> {
    if history.is_empty() {
        return Ok(None);
    }
    let space = cfg.tokens();
    let keep = match cfg.objective {
        Objective::CausalNextItem => cfg.max_seq_len,
        Objective::MaskedToken => cfg.max_seq_len - 1,
    };
    let recent = &history[history.len().saturating_sub(keep)..];
    let mut seq: Vec<(usize, usize)> = recent.iter().map(|e| (e.item, e.domain)).collect();
    if cfg.objective == Objective::MaskedToken {
        seq.push((space.mask(), domain));
    }
    let last = seq.len() - 1;
    let p = prepare(cfg, &seq, &[(last, usize::MAX)])?;
    let row = p.targets[0].0;
    Ok(Some((p, row)))
}

/// Stacked batch plus flattened target rows, pair matrices and lengths.
pub struct StackedBatch {
    pub batch: EncoderBatch,
    pub rows: Vec<usize>,
    pub items: Vec<usize>,
    pub pairs: Vec<Vec<f64>>,
    pub content: Vec<usize>,
}

pub fn stack(prepared: &[Prepared], pad: usize) -> StackedBatch {
    let inputs: Vec<EncoderInput> = prepared.iter().map(|p| p.input.clone()).collect();
    let batch = EncoderBatch::stack(&inputs, pad);
    let seq = batch.seq;
    let mut rows = Vec::new();
    let mut items = Vec::new();
    for (b, p) in prepared.iter().enumerate() {
        for &(r, item) in &p.targets {
            rows.push(b * seq + r);
            items.push(item);
        }
    }
    let pairs = prepared.iter().map(|p| pad_pairs(&p.pairs, p.input.len(), seq)).collect();
    let content = prepared.iter().map(|p| p.content).collect();
    StackedBatch { batch, rows, items, pairs, content }
}

/// Sorted items of every domain, for negative sampling.
pub fn domain_pools(catalog: &Catalog) -> Vec<Vec<usize>> {
    (0..catalog.num_domains()).map(|d| catalog.items_of(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(ib: usize, objective: Objective) -> ModelConfig {
        ModelConfig {
            embed_dim: 4,
            num_layers: 1,
            num_heads: 1,
            max_seq_len: 4,
            vocab_size: 10,
            num_domains: 2,
            ib_tokens: ib,
            objective,
            ..Default::default()
        }
    }

    fn ev(item: usize, domain: usize) -> Event {
        Event { item, domain, timestamp: 0 }
    }

    #[test]
    fn query_keeps_most_recent() {
        let h: Vec<Event> = (0..6).map(|i| ev(i, i % 2)).collect();
        let (p, row) = prepare_query(&cfg(0, Objective::CausalNextItem), &h, 0).unwrap().unwrap();
        assert_eq!(p.input.tokens, vec![2, 3, 4, 5]);
        assert_eq!(row, 3);
        let (p, row) = prepare_query(&cfg(0, Objective::MaskedToken), &h, 1).unwrap().unwrap();
        assert_eq!(p.input.tokens, vec![3, 4, 5, 11]);
        assert_eq!(row, 3);
        assert!(prepare_query(&cfg(0, Objective::CausalNextItem), &[], 0).unwrap().is_none());
    }

    #[test]
    fn bottleneck_query_reads_last_interaction() {
        let h = vec![ev(1, 1), ev(2, 0), ev(3, 1)];
        let (p, row) = prepare_query(&cfg(1, Objective::CausalNextItem), &h, 0).unwrap().unwrap();
        // blocks: [ib0, 2] [ib1, 1, 3]
        assert_eq!(p.input.tokens, vec![12, 2, 13, 1, 3]);
        assert_eq!(row, 4);
        assert_eq!(p.content, 3);
    }

    #[test]
    fn bottleneck_causal_supervises_last_only() {
        let ex = Example { source: 0, tokens: vec![1, 2, 3], domains: vec![0, 1, 0], targets: vec![(0, 2), (1, 3), (2, 7)] };
        let p = prepare_example(&cfg(1, Objective::CausalNextItem), &ex).unwrap();
        assert_eq!(p.targets, vec![(2, 7)]);
        let p = prepare_example(&cfg(0, Objective::CausalNextItem), &ex).unwrap();
        assert_eq!(p.targets.len(), 3);
    }
}
