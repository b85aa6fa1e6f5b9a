//! Reverse-mode tape over the fixed set of operations the encoder needs.
//!
//! Nodes are appended in evaluation order, so the tape is topologically sorted
//! by construction and the backward sweep is a single reverse scan.

use std::collections::HashMap;

use super::kernels::{dot, gemm_nn, gemm_nt};
use super::params::{ParamId, ParamSet};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Batched multi-head layout: `batch` sequences of `seq` rows each, stacked,
/// with the model width split into `heads` equal column slices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadLayout {
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
}

impl HeadLayout {
    #[inline]
    pub(crate) fn score_row(&self, b: usize, h: usize, i: usize) -> usize {
        (b * self.heads + h) * self.seq + i
    }
}

pub(crate) enum Slot<T> {
    Owned(Tensor<T>),
    Param(ParamId),
}

pub(crate) enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul { a: Var, b: Var },
    MatMulBt { a: Var, b: Var },
    Add { a: Var, b: Var },
    AddRow { a: Var, bias: Var },
    Scale { a: Var, s: T },
    /// `deriv` caches the pointwise derivative from the forward pass.
    Gelu { a: Var, deriv: Vec<T> },
    Softmax { a: Var },
    LayerNorm { a: Var, gain: Var, bias: Var, normed: Vec<T>, inv_std: Vec<T> },
    Gather { table: Var, ids: Vec<usize> },
    ConcatCols { parts: Vec<Var> },
    SliceCols { a: Var, start: usize },
    SelectRows { a: Var, rows: Vec<usize> },
    MixRows { a: Var, groups: Vec<Vec<usize>> },
    HeadScores { q: Var, k: Var, layout: HeadLayout, scale: T },
    HeadApply { p: Var, v: Var, layout: HeadLayout },
    Sum { a: Var },
    WeightedSum { a: Var, w: Vec<T> },
    LinComb { terms: Vec<(Var, T)> },
    CosineScores { h: Var, table: Var, scoring: Scoring, h_hat: Vec<T>, h_norm: Vec<T> },
    CrossEntropy { scores: Var, targets: Vec<usize>, probs: Vec<T> },
}

/// Which table rows a cosine-scoring node compares against.
#[derive(Clone, Debug)]
pub enum Scoring {
    /// Rows `0..n` of the table, same candidates for every query.
    Prefix(usize),
    /// Per-query candidate row lists, all of equal length.
    Candidates(Vec<Vec<usize>>),
}

pub(crate) struct Node<T> {
    pub(crate) slot: Slot<T>,
    pub(crate) op: Op<T>,
}

/// A single-threaded computation graph with an optional borrowed parameter set.
pub struct Tape<'p, T: Real = f64> {
    pub(crate) params: Option<&'p ParamSet<T>>,
    pub(crate) nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, Var>,
}

const LN_EPS: f64 = 1e-5;
const NORM_FLOOR: f64 = 1e-12;

/// Value and derivative sharing one `tanh`.
#[inline]
pub(crate) fn gelu_with_grad<T: Real>(x: T) -> (T, T) {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let inner = c * (x + T::lit(0.044715) * x * x * x);
    let t = inner.tanh();
    let dinner = c * (T::one() + T::lit(3.0 * 0.044715) * x * x);
    let half = T::lit(0.5);
    (half * x * (T::one() + t), half * (T::one() + t) + half * x * (T::one() - t * t) * dinner)
}

impl<T: Real> Default for Tape<'static, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<'static, T> {
    pub fn new() -> Self {
        Tape { params: None, nodes: Vec::new(), param_nodes: HashMap::new() }
    }
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn with_params(params: &'p ParamSet<T>) -> Self {
        Tape { params: Some(params), nodes: Vec::with_capacity(256), param_nodes: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match &self.nodes[v.0].slot {
            Slot::Owned(t) => t,
            Slot::Param(id) => self.params.expect("param node without parameter set").get(*id),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("output of {}", op_name(&op))));
        }
        self.nodes.push(Node { slot: Slot::Owned(value), op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant or differentiable input that is not a registered parameter.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { slot: Slot::Owned(value), op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Node for a registered parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        assert!(self.params.is_some(), "tape has no parameter set");
        self.nodes.push(Node { slot: Slot::Param(id), op: Op::Param(id) });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(Error::Shape(format!("matmul {:?} x {:?}", x.shape(), y.shape())));
        }
        let (n, k, m) = (x.rows(), x.cols(), y.cols());
        let mut out = vec![T::zero(); n * m];
        gemm_nn(x.data(), y.data(), &mut out, n, k, m);
        self.push(Tensor::matrix(n, m, out)?, Op::MatMul { a, b })
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.cols() {
            return Err(Error::Shape(format!("matmul_bt {:?} x {:?}ᵀ", x.shape(), y.shape())));
        }
        let (n, k, m) = (x.rows(), x.cols(), y.rows());
        let mut out = vec![T::zero(); n * m];
        gemm_nt(x.data(), y.data(), &mut out, n, k, m);
        self.push(Tensor::matrix(n, m, out)?, Op::MatMulBt { a, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::Shape(format!("add {:?} + {:?}", x.shape(), y.shape())));
        }
        let mut out = x.clone();
        out.add_assign(y);
        self.push(out, Op::Add { a, b })
    }

    /// Adds a `1×m` (or length-`m`) bias to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.len() != x.cols() {
            return Err(Error::Shape(format!("add_row {:?} + {:?}", x.shape(), b.shape())));
        }
        let mut out = x.clone();
        let bd = b.data();
        for r in 0..out.rows() {
            for (o, &bv) in out.row_mut(r).iter_mut().zip(bd) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRow { a, bias })
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale { a, s })
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut out = Vec::with_capacity(x.len());
        let mut deriv = Vec::with_capacity(x.len());
        for &v in x.data() {
            let (y, dy) = gelu_with_grad(v);
            out.push(y);
            deriv.push(dy);
        }
        let out = Tensor::new(x.shape().to_vec(), out)?;
        self.push(out, Op::Gelu { a, deriv })
    }

    /// Row-wise softmax with an additive mask of `0` / `-inf` entries of the
    /// same shape as `a`. Masked positions come out exactly zero. A row whose
    /// entries are all masked is an error.
    pub fn row_softmax(&mut self, a: Var, mask: &Tensor<T>) -> Result<Var> {
        self.softmax_impl(a, mask, false)
    }

    /// Like [`Tape::row_softmax`] but fully masked rows (padding queries)
    /// produce all-zero rows instead of failing.
    pub fn row_softmax_padded(&mut self, a: Var, mask: &Tensor<T>) -> Result<Var> {
        self.softmax_impl(a, mask, true)
    }

    fn softmax_impl(&mut self, a: Var, mask: &Tensor<T>, allow_dead: bool) -> Result<Var> {
        let x = self.value(a);
        if x.shape() != mask.shape() {
            return Err(Error::Shape(format!("softmax {:?} with mask {:?}", x.shape(), mask.shape())));
        }
        let out = softmax_rows(x, mask, allow_dead)?;
        self.push(out, Op::Softmax { a })
    }

    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = (x.rows(), x.cols());
        if cols < 2 {
            return Err(Error::Shape("layer_norm needs a last dimension of at least 2".into()));
        }
        let (g, b) = (self.value(gain), self.value(bias));
        if g.len() != cols || b.len() != cols {
            return Err(Error::Shape("layer_norm affine size differs from width".into()));
        }
        let mut normed = vec![T::zero(); rows * cols];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); rows * cols];
        let n = T::lit(cols as f64);
        for r in 0..rows {
            let row = x.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + T::lit(LN_EPS)).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let xh = (row[c] - mean) * is;
                normed[r * cols + c] = xh;
                out[r * cols + c] = xh * g.data()[c] + b.data()[c];
            }
        }
        let out = Tensor::new(x.shape().to_vec(), out)?;
        self.push(out, Op::LayerNorm { a, gain, bias, normed, inv_std })
    }

    /// Rows of `table` picked by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let cols = t.cols();
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= t.rows() {
                return Err(Error::OutOfVocabulary { id, size: t.rows() });
            }
            out.extend_from_slice(t.row(id));
        }
        self.push(Tensor::matrix(ids.len(), cols, out)?, Op::Gather { table, ids: ids.to_vec() })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::Shape("concat_cols row counts differ".into()));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(Tensor::matrix(rows, total, out)?, Op::ConcatCols { parts: parts.to_vec() })
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.cols() {
            return Err(Error::Shape("slice_cols out of range".into()));
        }
        let mut out = Vec::with_capacity(x.rows() * len);
        for r in 0..x.rows() {
            out.extend_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(Tensor::matrix(x.rows(), len, out)?, Op::SliceCols { a, start })
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let cols = x.cols();
        let mut out = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r >= x.rows() {
                return Err(Error::Shape(format!("row {r} out of {}", x.rows())));
            }
            out.extend_from_slice(x.row(r));
        }
        self.push(Tensor::matrix(rows.len(), cols, out)?, Op::SelectRows { a, rows: rows.to_vec() })
    }

    /// Replaces every row of each group by the element-wise sum of the group.
    /// Groups must be disjoint.
    pub fn mix_rows(&mut self, a: Var, groups: &[Vec<usize>]) -> Result<Var> {
        let x = self.value(a);
        let mut out = x.clone();
        let cols = x.cols();
        let mut seen = vec![false; x.rows()];
        for g in groups {
            let mut acc = vec![T::zero(); cols];
            for &r in g {
                if r >= x.rows() || seen[r] {
                    return Err(Error::Shape(format!("mix_rows: bad or repeated row {r}")));
                }
                seen[r] = true;
                for (s, &v) in acc.iter_mut().zip(x.row(r)) {
                    *s += v;
                }
            }
            for &r in g {
                out.row_mut(r).copy_from_slice(&acc);
            }
        }
        self.push(out, Op::MixRows { a, groups: groups.to_vec() })
    }

    /// Per-sequence, per-head scaled scores `q·kᵀ`. Output has
    /// `batch·heads·seq` rows and `seq` columns.
    pub fn head_scores(&mut self, q: Var, k: Var, layout: HeadLayout, scale: T) -> Result<Var> {
        let (qv, kv) = (self.value(q), self.value(k));
        let width = qv.cols();
        if qv.shape() != kv.shape() || qv.rows() != layout.batch * layout.seq || width % layout.heads != 0 {
            return Err(Error::Shape(format!("head_scores {:?} {:?} {layout:?}", qv.shape(), kv.shape())));
        }
        let dh = width / layout.heads;
        let l = layout.seq;
        let mut out = vec![T::zero(); layout.batch * layout.heads * l * l];
        for b in 0..layout.batch {
            for h in 0..layout.heads {
                for i in 0..l {
                    let qi = &qv.row(b * l + i)[h * dh..(h + 1) * dh];
                    let orow = layout.score_row(b, h, i) * l;
                    for j in 0..l {
                        let kj = &kv.row(b * l + j)[h * dh..(h + 1) * dh];
                        out[orow + j] = dot(qi, kj) * scale;
                    }
                }
            }
        }
        let rows = layout.batch * layout.heads * l;
        self.push(Tensor::matrix(rows, l, out)?, Op::HeadScores { q, k, layout, scale })
    }

    /// Per-sequence, per-head `p·v`, heads concatenated back to full width.
    pub fn head_apply(&mut self, p: Var, v: Var, layout: HeadLayout) -> Result<Var> {
        let (pv, vv) = (self.value(p), self.value(v));
        let l = layout.seq;
        let width = vv.cols();
        if pv.rows() != layout.batch * layout.heads * l || pv.cols() != l || vv.rows() != layout.batch * l {
            return Err(Error::Shape(format!("head_apply {:?} {:?} {layout:?}", pv.shape(), vv.shape())));
        }
        let dh = width / layout.heads;
        let mut out = vec![T::zero(); layout.batch * l * width];
        for b in 0..layout.batch {
            for h in 0..layout.heads {
                for i in 0..l {
                    let prow = pv.row(layout.score_row(b, h, i));
                    let o = &mut out[(b * l + i) * width + h * dh..(b * l + i) * width + (h + 1) * dh];
                    for (j, &pij) in prow.iter().enumerate() {
                        if pij == T::zero() {
                            continue;
                        }
                        let vj = &vv.row(b * l + j)[h * dh..(h + 1) * dh];
                        for (oc, &vc) in o.iter_mut().zip(vj) {
                            *oc += pij * vc;
                        }
                    }
                }
            }
        }
        self.push(Tensor::matrix(layout.batch * l, width, out)?, Op::HeadApply { p, v, layout })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum { a })
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        let s = self.sum(a)?;
        self.scale(s, T::one() / T::lit(n as f64))
    }

    /// `Σ a ⊙ w` for a constant weight tensor.
    pub fn weighted_sum(&mut self, a: Var, w: &[T]) -> Result<Var> {
        let x = self.value(a);
        if x.len() != w.len() {
            return Err(Error::Shape("weighted_sum weight length differs".into()));
        }
        let s = dot(x.data(), w);
        self.push(Tensor::scalar(s), Op::WeightedSum { a, w: w.to_vec() })
    }

    /// `Σ cᵢ·xᵢ` over scalar nodes.
    pub fn lin_comb(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let mut s = T::zero();
        for &(v, c) in terms {
            let x = self.value(v);
            if !x.is_scalar() {
                return Err(Error::Shape("lin_comb expects scalar terms".into()));
            }
            s += c * x.item();
        }
        self.push(Tensor::scalar(s), Op::LinComb { terms: terms.to_vec() })
    }

    /// Cosine similarity between each row of `h` and table rows chosen by `scoring`.
    pub fn cosine_scores(&mut self, h: Var, table: Var, scoring: Scoring) -> Result<Var> {
        let (hv, tv) = (self.value(h), self.value(table));
        if hv.cols() != tv.cols() {
            return Err(Error::Shape("cosine_scores width differs".into()));
        }
        let r = hv.cols();
        let n = hv.rows();
        let mut h_hat = vec![T::zero(); n * r];
        let mut h_norm = vec![T::zero(); n];
        for i in 0..n {
            let row = hv.row(i);
            let norm = dot(row, row).sqrt().max(T::lit(NORM_FLOOR));
            h_norm[i] = norm;
            for c in 0..r {
                h_hat[i * r + c] = row[c] / norm;
            }
        }
        let out = match &scoring {
            Scoring::Prefix(items) => {
                let items = *items;
                if items == 0 || items > tv.rows() {
                    return Err(Error::EmptyCandidates);
                }
                let t_hat = normalized_rows(tv, 0..items);
                let mut out = vec![T::zero(); n * items];
                gemm_nt(&h_hat, &t_hat, &mut out, n, r, items);
                Tensor::matrix(n, items, out)?
            }
            Scoring::Candidates(cands) => {
                if cands.len() != n {
                    return Err(Error::Shape("one candidate list per query required".into()));
                }
                let c = cands.first().map_or(0, Vec::len);
                if c == 0 {
                    return Err(Error::EmptyCandidates);
                }
                let t_hat = normalized_rows(tv, 0..tv.rows());
                let mut out = vec![T::zero(); n * c];
                for (i, list) in cands.iter().enumerate() {
                    if list.len() != c {
                        return Err(Error::Shape("ragged candidate lists".into()));
                    }
                    let hi = &h_hat[i * r..(i + 1) * r];
                    for (j, &id) in list.iter().enumerate() {
                        if id >= tv.rows() {
                            return Err(Error::OutOfVocabulary { id, size: tv.rows() });
                        }
                        out[i * c + j] = dot(hi, &t_hat[id * r..(id + 1) * r]);
                    }
                }
                Tensor::matrix(n, c, out)?
            }
        };
        self.push(out, Op::CosineScores { h, table, scoring, h_hat, h_norm })
    }

    /// Mean softmax cross-entropy of `scores` rows against target columns.
    pub fn cross_entropy(&mut self, scores: Var, targets: &[usize]) -> Result<Var> {
        let s = self.value(scores);
        let (n, c) = (s.rows(), s.cols());
        if targets.len() != n {
            return Err(Error::Shape("one target per score row required".into()));
        }
        if c == 0 {
            return Err(Error::EmptyCandidates);
        }
        let mut probs = vec![T::zero(); n * c];
        let mut loss = T::zero();
        for i in 0..n {
            let row = s.row(i);
            let t = targets[i];
            if t >= c {
                return Err(Error::Shape(format!("target column {t} out of {c}")));
            }
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (j, &v) in row.iter().enumerate() {
                let e = (v - mx).exp();
                probs[i * c + j] = e;
                z += e;
            }
            for p in &mut probs[i * c..(i + 1) * c] {
                *p = *p / z;
            }
            loss += z.ln() + mx - row[t];
        }
        loss = loss / T::lit(n as f64);
        self.push(Tensor::scalar(loss), Op::CrossEntropy { scores, targets: targets.to_vec(), probs })
    }
}

pub(crate) fn normalized_rows<T: Real>(t: &Tensor<T>, rows: std::ops::Range<usize>) -> Vec<T> {
    let r = t.cols();
    let mut out = Vec::with_capacity(rows.len() * r);
    for i in rows {
        let row = t.row(i);
        let norm = dot(row, row).sqrt().max(T::lit(NORM_FLOOR));
        out.extend(row.iter().map(|&x| x / norm));
    }
    out
}

/// Masked row softmax on plain tensors, shared by the tape and untaped callers.
pub fn softmax_rows<T: Real>(x: &Tensor<T>, mask: &Tensor<T>, allow_dead: bool) -> Result<Tensor<T>> {
    let cols = x.cols();
    let mut out = vec![T::zero(); x.len()];
    for r in 0..x.rows() {
        let row = x.row(r);
        let m = mask.row(r);
        let mut mx = T::neg_infinity();
        for (&v, &mv) in row.iter().zip(m) {
            if mv == T::zero() && v > mx {
                mx = v;
            }
        }
        if mx == T::neg_infinity() {
            if allow_dead {
                continue;
            }
            return Err(Error::FullyMaskedRow(r));
        }
        let o = &mut out[r * cols..(r + 1) * cols];
        let mut z = T::zero();
        for ((ov, &v), &mv) in o.iter_mut().zip(row).zip(m) {
            if mv == T::zero() {
                let e = (v - mx).exp();
                *ov = e;
                z += e;
            }
        }
        for ov in o.iter_mut() {
            *ov = *ov / z;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub(crate) fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Param(_) => "param",
        Op::MatMul { .. } => "matmul",
        Op::MatMulBt { .. } => "matmul_bt",
        Op::Add { .. } => "add",
        Op::AddRow { .. } => "add_row",
        Op::Scale { .. } => "scale",
        Op::Gelu { .. } => "gelu",
        Op::Softmax { .. } => "row_softmax",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Gather { .. } => "gather",
        Op::ConcatCols { .. } => "concat_cols",
        Op::SliceCols { .. } => "slice_cols",
        Op::SelectRows { .. } => "select_rows",
        Op::MixRows { .. } => "mix_rows",
        Op::HeadScores { .. } => "head_scores",
        Op::HeadApply { .. } => "head_apply",
        Op::Sum { .. } => "sum",
        Op::WeightedSum { .. } => "weighted_sum",
        Op::LinComb { .. } => "lin_comb",
        Op::CosineScores { .. } => "cosine_scores",
        Op::CrossEntropy { .. } => "cross_entropy",
    }
}
