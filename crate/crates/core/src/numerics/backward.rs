use super::kernels::{dot, gemm_nn, gemm_nt, gemm_tn};
use super::params::{ParamId, ParamSet};
use super::tape::{normalized_rows, Op, Scoring, Tape, Var};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Adjoints produced by one backward sweep.
pub struct Gradients<T: Real> {
    adjoints: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, Var)>,
}

impl<T: Real> Gradients<T> {
    /// Adjoint of a leaf or parameter node; `None` if the loss does not reach it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.iter().find(|(p, _)| *p == id).and_then(|(_, v)| self.wrt(*v))
    }

    /// Dense gradient per parameter in id order; unreached parameters get zeros.
    pub fn into_param_grads(mut self, params: &ParamSet<T>) -> Vec<Tensor<T>> {
        let mut out: Vec<Tensor<T>> = params.ids().map(|id| Tensor::zeros(params.get(id).shape())).collect();
        for (id, v) in &self.params {
            if let Some(g) = self.adjoints[v.0].take() {
                out[id.0] = g;
            }
        }
        out
    }
}

fn accumulate<T: Real>(adj: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn accumulate_with<T: Real>(
    adj: &mut [Option<Tensor<T>>],
    v: Var,
    shape: &[usize],
    f: impl FnOnce(&mut [T]),
) {
    let slot = &mut adj[v.0];
    if slot.is_none() {
        *slot = Some(Tensor::zeros(shape));
    }
    f(slot.as_mut().unwrap().data_mut());
}

impl<'p, T: Real> Tape<'p, T> {
    /// Reverse sweep from a scalar `loss`. Only nodes the loss depends on are
    /// visited; the tape itself is left untouched, so calling this twice on the
    /// same graph gives identical results.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if !self.value(loss).is_scalar() {
            return Err(Error::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::filled(self.value(loss).shape(), T::one()));
        let mut params = Vec::new();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let g = match &node.op {
                Op::Leaf => continue,
                Op::Param(id) => {
                    if adj[idx].is_some() {
                        params.push((*id, Var(idx)));
                    }
                    continue;
                }
                _ => match adj[idx].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            let out = self.value(Var(idx));
            self.backprop_node(&node.op, out, &g, &mut adj)?;
        }
        Ok(Gradients { adjoints: adj, params })
    }

    fn backprop_node(&self, op: &Op<T>, out: &Tensor<T>, g: &Tensor<T>, adj: &mut [Option<Tensor<T>>]) -> Result<()> {
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { a, b } => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (n, k, m) = (x.rows(), x.cols(), y.cols());
                accumulate_with(adj, *a, x.shape(), |d| gemm_nt(g.data(), y.data(), d, n, m, k));
                accumulate_with(adj, *b, y.shape(), |d| gemm_tn(x.data(), g.data(), d, n, k, m));
            }
            Op::MatMulBt { a, b } => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (n, k, m) = (x.rows(), x.cols(), y.rows());
                accumulate_with(adj, *a, x.shape(), |d| gemm_nn(g.data(), y.data(), d, n, m, k));
                accumulate_with(adj, *b, y.shape(), |d| gemm_tn(g.data(), x.data(), d, n, m, k));
            }
            Op::Add { a, b } => {
                accumulate(adj, *a, g.clone());
                accumulate(adj, *b, g.clone());
            }
            Op::AddRow { a, bias } => {
                accumulate(adj, *a, g.clone());
                let cols = g.cols();
                accumulate_with(adj, *bias, self.value(*bias).shape(), |d| {
                    for r in 0..g.rows() {
                        for c in 0..cols {
                            d[c] += g.data()[r * cols + c];
                        }
                    }
                });
            }
            Op::Scale { a, s } => {
                let s = *s;
                accumulate(adj, *a, g.map(|v| v * s));
            }
            Op::Gelu { a, deriv } => {
                let x = self.value(*a);
                let d: Vec<T> = deriv.iter().zip(g.data()).map(|(&dv, &gv)| gv * dv).collect();
                accumulate(adj, *a, Tensor::new(x.shape().to_vec(), d)?);
            }
            Op::Softmax { a } => {
                let cols = out.cols();
                let mut d = vec![T::zero(); out.len()];
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let inner = dot(y, gr);
                    for c in 0..cols {
                        d[r * cols + c] = y[c] * (gr[c] - inner);
                    }
                }
                accumulate(adj, *a, Tensor::new(out.shape().to_vec(), d)?);
            }
            Op::LayerNorm { a, gain, bias, normed, inv_std } => {
                let gamma = self.value(*gain);
                let (rows, cols) = (out.rows(), out.cols());
                let n = T::lit(cols as f64);
                let mut dx = vec![T::zero(); rows * cols];
                let mut dgain = vec![T::zero(); cols];
                let mut dbias = vec![T::zero(); cols];
                let mut dxh = vec![T::zero(); cols];
                for r in 0..rows {
                    let gr = g.row(r);
                    let xh = &normed[r * cols..(r + 1) * cols];
                    let mut mean_d = T::zero();
                    let mut mean_dx = T::zero();
                    for c in 0..cols {
                        dgain[c] += gr[c] * xh[c];
                        dbias[c] += gr[c];
                        dxh[c] = gr[c] * gamma.data()[c];
                        mean_d += dxh[c];
                        mean_dx += dxh[c] * xh[c];
                    }
                    mean_d = mean_d / n;
                    mean_dx = mean_dx / n;
                    for c in 0..cols {
                        dx[r * cols + c] = inv_std[r] * (dxh[c] - mean_d - xh[c] * mean_dx);
                    }
                }
                accumulate(adj, *a, Tensor::new(out.shape().to_vec(), dx)?);
                accumulate(adj, *gain, Tensor::new(gamma.shape().to_vec(), dgain)?);
                accumulate(adj, *bias, Tensor::new(self.value(*bias).shape().to_vec(), dbias)?);
            }
            Op::Gather { table, ids } => {
                let t = self.value(*table);
                let cols = t.cols();
                accumulate_with(adj, *table, t.shape(), |d| {
                    for (i, &id) in ids.iter().enumerate() {
                        for c in 0..cols {
                            d[id * cols + c] += g.data()[i * cols + c];
                        }
                    }
                });
            }
            Op::ConcatCols { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let w = pv.cols();
                    let mut d = Vec::with_capacity(pv.len());
                    for r in 0..g.rows() {
                        d.extend_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    accumulate(adj, p, Tensor::new(pv.shape().to_vec(), d)?);
                    offset += w;
                }
            }
            Op::SliceCols { a, start } => {
                let x = self.value(*a);
                let (cols, w) = (x.cols(), g.cols());
                accumulate_with(adj, *a, x.shape(), |d| {
                    for r in 0..g.rows() {
                        for c in 0..w {
                            d[r * cols + start + c] += g.data()[r * w + c];
                        }
                    }
                });
            }
            Op::SelectRows { a, rows } => {
                let x = self.value(*a);
                let cols = x.cols();
                accumulate_with(adj, *a, x.shape(), |d| {
                    for (i, &r) in rows.iter().enumerate() {
                        for c in 0..cols {
                            d[r * cols + c] += g.data()[i * cols + c];
                        }
                    }
                });
            }
            Op::MixRows { a, groups } => {
                let mut d = g.clone();
                let cols = g.cols();
                for grp in groups {
                    let mut acc = vec![T::zero(); cols];
                    for &r in grp {
                        for (s, &v) in acc.iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    for &r in grp {
                        d.row_mut(r).copy_from_slice(&acc);
                    }
                }
                accumulate(adj, *a, d);
            }
            Op::HeadScores { q, k, layout, scale } => {
                let (qv, kv) = (self.value(*q), self.value(*k));
                let width = qv.cols();
                let dh = width / layout.heads;
                let l = layout.seq;
                let mut dq = vec![T::zero(); qv.len()];
                let mut dk = vec![T::zero(); kv.len()];
                for b in 0..layout.batch {
                    for h in 0..layout.heads {
                        let cs = h * dh;
                        for i in 0..l {
                            let grow = g.row(layout.score_row(b, h, i));
                            let qi = &qv.row(b * l + i)[cs..cs + dh];
                            let qrow = (b * l + i) * width + cs;
                            for (j, &gij) in grow.iter().enumerate() {
                                if gij == T::zero() {
                                    continue;
                                }
                                let gs = gij * *scale;
                                let kj = &kv.row(b * l + j)[cs..cs + dh];
                                let krow = (b * l + j) * width + cs;
                                for c in 0..dh {
                                    dq[qrow + c] += gs * kj[c];
                                    dk[krow + c] += gs * qi[c];
                                }
                            }
                        }
                    }
                }
                accumulate(adj, *q, Tensor::new(qv.shape().to_vec(), dq)?);
                accumulate(adj, *k, Tensor::new(kv.shape().to_vec(), dk)?);
            }
            Op::HeadApply { p, v, layout } => {
                let (pv, vv) = (self.value(*p), self.value(*v));
                let width = vv.cols();
                let dh = width / layout.heads;
                let l = layout.seq;
                let mut dp = vec![T::zero(); pv.len()];
                let mut dv = vec![T::zero(); vv.len()];
                for b in 0..layout.batch {
                    for h in 0..layout.heads {
                        let cs = h * dh;
                        for i in 0..l {
                            let prow_idx = layout.score_row(b, h, i);
                            let prow = pv.row(prow_idx);
                            let go = &g.row(b * l + i)[cs..cs + dh];
                            for j in 0..l {
                                let vrow = (b * l + j) * width + cs;
                                let vj = &vv.data()[vrow..vrow + dh];
                                dp[prow_idx * l + j] = dot(go, vj);
                                let pij = prow[j];
                                if pij != T::zero() {
                                    for c in 0..dh {
                                        dv[vrow + c] += pij * go[c];
                                    }
                                }
                            }
                        }
                    }
                }
                accumulate(adj, *p, Tensor::new(pv.shape().to_vec(), dp)?);
                accumulate(adj, *v, Tensor::new(vv.shape().to_vec(), dv)?);
            }
            Op::Sum { a } => {
                let x = self.value(*a);
                accumulate(adj, *a, Tensor::filled(x.shape(), g.item()));
            }
            Op::WeightedSum { a, w } => {
                let x = self.value(*a);
                let gv = g.item();
                accumulate(adj, *a, Tensor::new(x.shape().to_vec(), w.iter().map(|&wv| wv * gv).collect())?);
            }
            Op::LinComb { terms } => {
                for &(v, c) in terms {
                    accumulate(adj, v, Tensor::scalar(c * g.item()));
                }
            }
            Op::CosineScores { h, table, scoring, h_hat, h_norm } => {
                let (hv, tv) = (self.value(*h), self.value(*table));
                let r = hv.cols();
                let n = hv.rows();
                let c = g.cols();
                let mut dh_hat = vec![T::zero(); n * r];
                match scoring {
                    Scoring::Prefix(items) => {
                        let items = *items;
                        let t_hat = normalized_rows(tv, 0..items);
                        gemm_nn(g.data(), &t_hat, &mut dh_hat, n, items, r);
                        let mut dt_hat = vec![T::zero(); items * r];
                        gemm_tn(g.data(), h_hat, &mut dt_hat, n, items, r);
                        accumulate_with(adj, *table, tv.shape(), |d| {
                            for it in 0..items {
                                let row = tv.row(it);
                                let norm = dot(row, row).sqrt().max(T::lit(1e-12));
                                let th = &t_hat[it * r..(it + 1) * r];
                                let dth = &dt_hat[it * r..(it + 1) * r];
                                let proj = dot(th, dth);
                                for k in 0..r {
                                    d[it * r + k] += (dth[k] - th[k] * proj) / norm;
                                }
                            }
                        });
                    }
                    Scoring::Candidates(cands) => {
                        let t_hat = normalized_rows(tv, 0..tv.rows());
                        let inv_norm: Vec<T> = (0..tv.rows())
                            .map(|it| {
                                let row = tv.row(it);
                                T::one() / dot(row, row).sqrt().max(T::lit(1e-12))
                            })
                            .collect();
                        accumulate_with(adj, *table, tv.shape(), |d| {
                            for (i, list) in cands.iter().enumerate() {
                                let hi = &h_hat[i * r..(i + 1) * r];
                                for (j, &id) in list.iter().enumerate() {
                                    let gij = g.data()[i * c + j];
                                    if gij == T::zero() {
                                        continue;
                                    }
                                    let th = &t_hat[id * r..(id + 1) * r];
                                    let proj = out.data()[i * c + j];
                                    let gs = gij * inv_norm[id];
                                    let dh_row = &mut dh_hat[i * r..(i + 1) * r];
                                    let d_row = &mut d[id * r..(id + 1) * r];
                                    for k in 0..r {
                                        dh_row[k] += gij * th[k];
                                        d_row[k] += gs * (hi[k] - th[k] * proj);
                                    }
                                }
                            }
                        });
                    }
                }
                let mut dh = vec![T::zero(); n * r];
                for i in 0..n {
                    let hh = &h_hat[i * r..(i + 1) * r];
                    let dhh = &dh_hat[i * r..(i + 1) * r];
                    let proj = dot(hh, dhh);
                    for k in 0..r {
                        dh[i * r + k] = (dhh[k] - hh[k] * proj) / h_norm[i];
                    }
                }
                accumulate(adj, *h, Tensor::new(hv.shape().to_vec(), dh)?);
            }
            Op::CrossEntropy { scores, targets, probs } => {
                let s = self.value(*scores);
                let (n, c) = (s.rows(), s.cols());
                let coef = g.item() / T::lit(n as f64);
                let mut d: Vec<T> = probs.iter().map(|&p| p * coef).collect();
                for (i, &t) in targets.iter().enumerate() {
                    d[i * c + t] -= coef;
                }
                accumulate(adj, *scores, Tensor::new(s.shape().to_vec(), d)?);
            }
        }
        Ok(())
    }
}
