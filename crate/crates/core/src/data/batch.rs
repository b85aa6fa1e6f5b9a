use rand::seq::SliceRandom;
use rand::Rng;

use super::catalog::Event;
use crate::model::Objective;
use crate::numerics::rng_for;

/// One training sequence: model inputs plus the supervised positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    /// Index of the source sequence in the view.
    pub source: usize,
    /// Input tokens; masked positions carry the mask token.
    pub tokens: Vec<usize>,
    pub domains: Vec<usize>,
    /// `(position, item)` pairs to predict.
    pub targets: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub id: usize,
    pub examples: Vec<Example>,
}

#[derive(Clone, Copy, Debug)]
pub struct BatchSpec {
    pub batch_size: usize,
    /// Maximum number of input positions.
    pub max_len: usize,
    pub objective: Objective,
    pub mask_token: usize,
    pub mask_probability: f64,
}

/// Builds the example for one training prefix, or `None` when it is too short.
///
/// Causal mode keeps the last `max_len + 1` events: the first `max_len` are
/// input and every position predicts its successor. Masked mode keeps the last
/// `max_len` events and masks each independently (at least one).
pub fn make_example(source: usize, events: &[Event], spec: &BatchSpec, r: &mut impl Rng) -> Option<Example> {
    match spec.objective {
        Objective::CausalNextItem => {
            if events.len() < 2 {
                return None;
            }
            let w = &events[events.len().saturating_sub(spec.max_len + 1)..];
            let n = w.len() - 1;
            Some(Example {
                source,
                tokens: w[..n].iter().map(|e| e.item).collect(),
                domains: w[..n].iter().map(|e| e.domain).collect(),
                targets: (0..n).map(|i| (i, w[i + 1].item)).collect(),
            })
        }
        Objective::MaskedToken => {
            if events.is_empty() {
                return None;
            }
            let w = &events[events.len().saturating_sub(spec.max_len)..];
            let mut tokens: Vec<usize> = w.iter().map(|e| e.item).collect();
            let mut targets = Vec::new();
            for (i, tok) in tokens.iter_mut().enumerate() {
                if r.gen_bool(spec.mask_probability) {
                    targets.push((i, *tok));
                    *tok = spec.mask_token;
                }
            }
            if targets.is_empty() {
                let i = w.len() - 1;
                targets.push((i, tokens[i]));
                tokens[i] = spec.mask_token;
            }
            Some(Example { source, tokens, domains: w.iter().map(|e| e.domain).collect(), targets })
        }
    }
}

/// One epoch of shuffled batches, reproducible from `(seed, epoch)`.
pub fn make_batches(view: &[&[Event]], spec: &BatchSpec, seed: u64, epoch: u64) -> Vec<Batch> {
    let mut r = rng_for(seed, epoch);
    let mut order: Vec<usize> = (0..view.len()).collect();
    order.shuffle(&mut r);
    let examples: Vec<Example> = order.iter().filter_map(|&i| make_example(i, view[i], spec, &mut r)).collect();
    examples
        .chunks(spec.batch_size.max(1))
        .enumerate()
        .map(|(id, c)| Batch { id, examples: c.to_vec() })
        .collect()
}
