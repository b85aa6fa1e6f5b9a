#![allow(dead_code)]

use paretorec::crossdomain::IbLayout;
use paretorec::model::AttentionTensor;
use paretorec::numerics::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Central-difference gradient of `f` with respect to every input tensor.
pub fn central_difference(f: &dyn Fn(&[Tensor]) -> f64, inputs: &[Tensor], eps: f64) -> Vec<Tensor> {
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[t].shape());
        for i in 0..inputs[t].len() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + eps;
            let up = f(&work);
            work[t].data_mut()[i] = orig - eps;
            let down = f(&work);
            work[t].data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / (2.0 * eps);
        }
        grads.push(g);
    }
    grads
}

pub fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.sq_norm().sqrt().max(b.sq_norm().sqrt()).max(1e-8);
    diff / scale
}

/// Checks the tape gradient of `build` (reduced to a scalar through fixed
/// random weights) against central differences. Returns the worst relative error.
pub fn check_op(
    inputs: &[Tensor],
    weights_seed: u64,
    build: &dyn Fn(&mut Tape<'static, f64>, &[Var]) -> Var,
) -> f64 {
    let probe = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars);
        tape.value(out).len()
    };
    let mut wr = rng(weights_seed);
    let w: Vec<f64> = (0..probe).map(|_| wr.gen_range(-1.0..1.0)).collect();

    let scalar = |xs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars);
        let s = tape.weighted_sum(out, &w).unwrap();
        tape.value(s).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let loss = tape.weighted_sum(out, &w).unwrap();
    let grads = tape.backward(loss).unwrap();
    let numeric = central_difference(&scalar, inputs, 1e-6);

    let mut worst: f64 = 0.0;
    for (v, n) in vars.iter().zip(&numeric) {
        let analytic = grads.wrt(*v).cloned().unwrap_or_else(|| Tensor::zeros(n.shape()));
        worst = worst.max(rel_err(&analytic, n));
    }
    worst
}

/// Which scalar the full-model gradient check differentiates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FdLoss {
    Rec,
    Cd,
}

/// Worst per-parameter relative error between tape gradients and central
/// differences for the whole encoder (d=4, 2 layers, 1 head, length 6).
pub fn full_model_fd(which: FdLoss, seed: u64) -> f64 {
    use paretorec::crossdomain::{attention_mass_loss, CdLossConfig};
    use paretorec::model::{encode, recommendation_loss, EncoderState, ModelConfig};
    use paretorec::train::{prepare, stack};

    let cfg = ModelConfig {
        embed_dim: 4,
        num_layers: 2,
        num_heads: 1,
        max_seq_len: 6,
        vocab_size: 12,
        num_domains: 2,
        init_seed: seed,
        ..Default::default()
    };
    let base = EncoderState::new(cfg.clone()).unwrap();
    let mut r = rng(seed);
    let prepared: Vec<_> = (0..2)
        .map(|_| {
            let seq: Vec<(usize, usize)> = (0..6)
                .map(|_| {
                    let d = r.gen_range(0..2);
                    (d * 6 + r.gen_range(0..6), d)
                })
                .collect();
            let targets: Vec<(usize, usize)> = (0..6).map(|p| (p, r.gen_range(0..12))).collect();
            prepare(&cfg, &seq, &targets).unwrap()
        })
        .collect();
    let sb = stack(&prepared, cfg.tokens().pad());
    let negatives: Vec<Vec<usize>> = sb
        .items
        .iter()
        .map(|&t| (0..12).filter(|&i| i != t).take(4).collect())
        .collect();

    let loss = |state: &EncoderState| -> (f64, Vec<Tensor>) {
        let mut tape = Tape::with_params(&state.params);
        let enc = encode(&mut tape, state, &sb.batch).unwrap();
        let out = match which {
            FdLoss::Rec => {
                let user = tape.select_rows(enc.hidden, &sb.rows).unwrap();
                let table = tape.param(state.item_embedding);
                recommendation_loss(&mut tape, user, table, 12, &sb.items, Some(&negatives)).unwrap()
            }
            FdLoss::Cd => attention_mass_loss(&mut tape, &enc, &sb.pairs, &sb.content, CdLossConfig::default()).unwrap(),
        };
        let v = tape.value(out).item();
        (v, tape.backward(out).unwrap().into_param_grads(&state.params))
    };

    let (_, analytic) = loss(&base);
    let ids: Vec<_> = base.params.ids().collect();
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let mut work = base.clone();
    for (k, &id) in ids.iter().enumerate() {
        let mut numeric = Tensor::zeros(base.params.get(id).shape());
        for i in 0..numeric.len() {
            let orig = work.params.get(id).data()[i];
            work.params.get_mut(id).data_mut()[i] = orig + eps;
            let up = loss(&work).0;
            work.params.get_mut(id).data_mut()[i] = orig - eps;
            let down = loss(&work).0;
            work.params.get_mut(id).data_mut()[i] = orig;
            numeric.data_mut()[i] = (up - down) / (2.0 * eps);
        }
        worst = worst.max(rel_err(&analytic[k], &numeric));
    }
    worst
}

pub fn random_attention(rng: &mut impl Rng, layers: usize, heads: usize, len: usize, live: &[bool]) -> AttentionTensor {
    let mut data = Vec::with_capacity(layers * heads * len * len);
    for _ in 0..layers * heads {
        for i in 0..len {
            let row: Vec<f64> =
                (0..len).map(|j| if live[i] && live[j] { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
            let s: f64 = row.iter().sum();
            data.extend(row.iter().map(|x| if s > 0.0 { x / s } else { 0.0 }));
        }
    }
    AttentionTensor::new(layers, heads, len, data).unwrap()
}

/// Mean over layers and heads of attention between items of different domains.
pub fn brute_cd(a: &AttentionTensor, dom: &[Option<usize>]) -> f64 {
    let mut total = 0.0;
    for l in 0..a.layers {
        for h in 0..a.heads {
            for i in 0..a.len {
                for j in 0..a.len {
                    if let (Some(x), Some(y)) = (dom[i], dom[j]) {
                        if x != y {
                            total += a.get(l, h, i, j);
                        }
                    }
                }
            }
        }
    }
    total / (a.layers * a.heads) as f64
}

/// Mean over layers and heads of item-to-bottleneck attention inside each block.
pub fn brute_ib(a: &AttentionTensor, layout: &IbLayout) -> f64 {
    let t = layout.tokens;
    let mut total = 0.0;
    for l in 0..a.layers {
        for h in 0..a.heads {
            for b in &layout.blocks {
                for i in t..t + b.items {
                    for j in 0..t {
                        total += a.get(l, h, b.start + i, b.start + j);
                    }
                }
            }
        }
    }
    total / (a.layers * a.heads) as f64
}


pub fn ib_model() -> paretorec::model::EncoderState {
    let cfg = paretorec::model::ModelConfig {
        embed_dim: 8,
        num_layers: 2,
        num_heads: 2,
        max_seq_len: 12,
        vocab_size: 30,
        num_domains: 2,
        ib_tokens: 2,
        init_seed: 3,
        ..Default::default()
    };
    paretorec::model::EncoderState::new(cfg).unwrap()
}

