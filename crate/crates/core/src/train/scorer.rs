use std::collections::BTreeMap;

use super::inputs::{prepare_query, stack, Prepared};
use crate::crossdomain::{weighted_attention_mass, DomainMap};
use crate::data::Event;
use crate::error::{Error, Result};
use crate::eval::{AttentionStats, Query, Scorer};
use crate::model::{encode, AttentionTensor, EncoderState};
use crate::numerics::{kernels::dot, Tape};

const CHUNK: usize = 128;

/// Scores candidates by cosine similarity between the encoded history and
/// the item embeddings. Single-domain models see only the history of the
/// query's domain.
pub struct ModelScorer {
    name: String,
    shared: Option<EncoderState>,
    per_domain: BTreeMap<usize, EncoderState>,
}

impl ModelScorer {
    pub fn cross_domain(name: impl Into<String>, state: EncoderState) -> Self {
        Self { name: name.into(), shared: Some(state), per_domain: BTreeMap::new() }
    }

    /// One model per domain; queries are routed by target domain.
    pub fn single_domain(name: impl Into<String>, models: Vec<(usize, EncoderState)>) -> Self {
        Self { name: name.into(), shared: None, per_domain: models.into_iter().collect() }
    }

    fn model_for(&self, domain: usize) -> Result<&EncoderState> {
        match &self.shared {
            Some(s) => Ok(s),
            None => self
                .per_domain
                .get(&domain)
                .ok_or_else(|| Error::Coverage(format!("no single-domain model for domain {domain}"))),
        }
    }

    fn history<'q>(&self, q: &Query<'q>) -> std::borrow::Cow<'q, [Event]> {
        if self.shared.is_some() {
            std::borrow::Cow::Borrowed(q.history)
        } else {
            std::borrow::Cow::Owned(q.history.iter().filter(|e| e.domain == q.domain).copied().collect())
        }
    }
}

/// User vectors for a group of queries sharing one model; `None` for empty histories.
fn user_vectors(state: &EncoderState, queries: &[(&[Event], usize)]) -> Result<Vec<Option<Vec<f64>>>> {
    let mut out = vec![None; queries.len()];
    let mut prepared: Vec<(usize, Prepared, usize)> = Vec::new();
    for (k, (h, d)) in queries.iter().enumerate() {
        if let Some((p, row)) = prepare_query(&state.config, h, *d)? {
            prepared.push((k, p, row));
        }
    }
    let pad = state.config.tokens().pad();
    for chunk in prepared.chunks(CHUNK) {
        let ps: Vec<Prepared> = chunk.iter().map(|c| c.1.clone()).collect();
        let sb = stack(&ps, pad);
        let mut tape = Tape::with_params(&state.params);
        let enc = encode(&mut tape, state, &sb.batch)?;
        let hidden = tape.value(enc.hidden);
        for (b, (k, _, row)) in chunk.iter().enumerate() {
            out[*k] = Some(hidden.row(b * sb.batch.seq + row).to_vec());
        }
    }
    Ok(out)
}

fn cosine_scores(state: &EncoderState, user: &[f64], candidates: &[usize]) -> Vec<f64> {
    let table = state.item_vectors();
    let un = dot(user, user).sqrt().max(1e-12);
    candidates
        .iter()
        .map(|&c| {
            let t = table.row(c);
            dot(user, t) / (un * dot(t, t).sqrt().max(1e-12))
        })
        .collect()
}

impl Scorer for ModelScorer {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn score_batch(&self, queries: &[Query<'_>]) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![Vec::new(); queries.len()];
        // group by model so each group is encoded in batches
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, q) in queries.iter().enumerate() {
            let key = if self.shared.is_some() { 0 } else { q.domain };
            groups.entry(key).or_default().push(k);
        }
        for (_, members) in groups {
            let state = self.model_for(queries[members[0]].domain)?;
            let hist: Vec<_> = members.iter().map(|&k| self.history(&queries[k])).collect();
            let pairs: Vec<(&[Event], usize)> =
                members.iter().zip(&hist).map(|(&k, h)| (h.as_ref(), queries[k].domain)).collect();
            let users = user_vectors(state, &pairs)?;
            for (&k, u) in members.iter().zip(users) {
                out[k] = match u {
                    Some(u) => cosine_scores(state, &u, queries[k].candidates),
                    None => vec![0.0; queries[k].candidates.len()],
                };
            }
        }
        Ok(out)
    }
}

/// Cross-domain and same-domain attention of `state` over a history, as mean
/// mass per item row. Without bottleneck tokens the two sum to 1; with them
/// "cross" is the item-to-bottleneck mass.
pub fn attention_stats(state: &EncoderState, history: &[Event], domain: usize) -> Result<Option<AttentionStats>> {
    let Some((p, _)) = prepare_query(&state.config, history, domain)? else { return Ok(None) };
    let pad = state.config.tokens().pad();
    let sb = stack(std::slice::from_ref(&p), pad);
    let mut tape = Tape::with_params(&state.params);
    let enc = encode(&mut tape, state, &sb.batch)?;
    let attn = AttentionTensor::from_tape(&tape, &enc, 0, p.input.len());
    let single = same_domain_pairs(&p.domains);
    let c = p.content.max(1) as f64;
    Ok(Some(AttentionStats {
        cross: weighted_attention_mass(&attn, &p.pairs) / c,
        single: weighted_attention_mass(&attn, &single) / c,
    }))
}

fn same_domain_pairs(dom: &DomainMap) -> Vec<f64> {
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
    w
}
