use std::io::Write;

use serde::{Deserialize, Serialize};

use super::min_norm::{frank_wolfe_gram, min_norm_two_gram};
use super::preference::{active_constraints, PreferenceSet};
use crate::error::{Error, Result};
use crate::numerics::{ParamGroup, ParamSet, Real, Tensor};

/// Parameters whose gradients enter the solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ParamScope {
    All,
    #[default]
    ExcludeEmbedding,
}

impl ParamScope {
    pub fn includes(self, group: ParamGroup) -> bool {
        match self {
            ParamScope::All => true,
            ParamScope::ExcludeEmbedding => group != ParamGroup::Embedding,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub scope: ParamScope,
    /// Number of preference regions `K`.
    pub preferences: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-4, scope: ParamScope::ExcludeEmbedding, preferences: 5 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::config("solver.max_iterations", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("solver.tolerance", "must be positive"));
        }
        if self.preferences < 1 {
            return Err(Error::config("solver.preferences", "must be at least 1"));
        }
        Ok(())
    }
}

/// Concatenates the in-scope gradients in parameter-id order.
pub fn flatten_gradients<T: Real>(grads: &[Tensor<T>], params: &ParamSet<T>, scope: ParamScope) -> Result<Vec<f64>> {
    if grads.len() != params.len() {
        return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), params.len())));
    }
    let mut out = Vec::new();
    let mut any = false;
    for (id, g) in params.ids().zip(grads) {
        if scope.includes(params.group(id)) {
            any = true;
            out.extend(g.data().iter().map(|x| x.as_f64()));
        }
    }
    if !any {
        return Err(Error::EmptyScope);
    }
    Ok(out)
}

/// `[⟨a,a⟩, ⟨a,b⟩, ⟨b,b⟩]` over the in-scope parameters, without flattening.
pub fn scoped_gram<T: Real>(a: &[Tensor<T>], b: &[Tensor<T>], params: &ParamSet<T>, scope: ParamScope) -> Result<[f64; 3]> {
    if a.len() != params.len() || b.len() != params.len() {
        return Err(Error::Shape("gradient count differs from parameter count".into()));
    }
    let mut g = [0.0; 3];
    let mut any = false;
    for ((id, x), y) in params.ids().zip(a).zip(b) {
        if !scope.includes(params.group(id)) {
            continue;
        }
        any = true;
        for (&p, &q) in x.data().iter().zip(y.data()) {
            let (p, q) = (p.as_f64(), q.as_f64());
            g[0] += p * p;
            g[1] += p * q;
            g[2] += q * q;
        }
    }
    if !any {
        return Err(Error::EmptyScope);
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient inner products".into()));
    }
    Ok(g)
}

/// Outcome of one reconciliation: effective weights on the two base losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconciled {
    pub alpha: (f64, f64),
    pub active: usize,
    pub fw_iterations: usize,
}

/// Picks the weights on (recommendation, cross-domain) losses from the loss
/// values and the inner products of their gradients.
///
/// Without active constraints this is the two-task min-norm point. Otherwise
/// Frank–Wolfe runs over the constraint gradients plus both base gradients;
/// since every member is a combination of the two base gradients, the result
/// is read back as coefficients on them, negatives clipped and renormalized.
/// A vanishing cross-domain gradient yields plain recommendation weights.
pub fn reconcile(losses: [f64; 2], gram: [f64; 3], prefs: &PreferenceSet, cfg: &SolverConfig) -> Result<Reconciled> {
    if losses.iter().chain(&gram).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("losses or gradients".into()));
    }
    let [g11, g12, g22] = gram;
    if g22 == 0.0 {
        return Ok(Reconciled { alpha: (1.0, 0.0), active: 0, fw_iterations: 0 });
    }
    let active = active_constraints(losses, prefs);
    if active.is_empty() {
        let alpha = min_norm_two_gram(g11, g12, g22)?;
        return Ok(Reconciled { alpha, active: 0, fw_iterations: 0 });
    }
    let mut coef: Vec<[f64; 2]> = active.iter().map(|&k| prefs.constraint(k)).collect();
    coef.push([1.0, 0.0]);
    coef.push([0.0, 1.0]);
    let n = coef.len();
    let mut gram_all = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (coef[i], coef[j]);
            gram_all[i][j] = a[0] * b[0] * g11 + (a[0] * b[1] + a[1] * b[0]) * g12 + a[1] * b[1] * g22;
        }
    }
    let fw = frank_wolfe_gram(&gram_all, cfg.max_iterations, cfg.tolerance)?;
    let mut c = [0.0f64; 2];
    for (w, a) in fw.weights.iter().zip(&coef) {
        c[0] += w * a[0];
        c[1] += w * a[1];
    }
    let c = [c[0].max(0.0), c[1].max(0.0)];
    let total = c[0] + c[1];
    let alpha = if total > 0.0 { (c[0] / total, c[1] / total) } else { (1.0, 0.0) };
    Ok(Reconciled { alpha, active: active.len(), fw_iterations: fw.iterations })
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    #[serde(rename = "L_rec")]
    pub l_rec: f64,
    #[serde(rename = "L_cd")]
    pub l_cd: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    #[serde(rename = "S_size")]
    pub s_size: usize,
    pub fw_iters: usize,
}

pub fn write_step_log(out: impl Write, records: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_step_log(input: impl std::io::Read) -> Result<Vec<StepRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn params() -> ParamSet {
        let mut p = ParamSet::new();
        p.register("emb", ParamGroup::Embedding, Tensor::zeros(&[3, 2]));
        p.register("w", ParamGroup::Dense, Tensor::zeros(&[2, 2]));
        p
    }

    #[test]
    fn flatten_scopes() {
        let p = params();
        let g = vec![Tensor::filled(&[3, 2], 1.0), Tensor::filled(&[2, 2], 2.0)];
        assert_eq!(flatten_gradients(&g, &p, ParamScope::All).unwrap().len(), 10);
        assert_eq!(flatten_gradients(&g, &p, ParamScope::ExcludeEmbedding).unwrap(), vec![2.0; 4]);
        let mut only_emb: ParamSet = ParamSet::new();
        only_emb.register("emb", ParamGroup::Embedding, Tensor::zeros(&[1, 1]));
        assert!(matches!(
            flatten_gradients(&[Tensor::zeros(&[1, 1])], &only_emb, ParamScope::ExcludeEmbedding),
            Err(Error::EmptyScope)
        ));
    }

    #[test]
    fn zero_cd_gradient_is_plain_training() {
        let prefs = PreferenceSet::new(5).unwrap();
        let r = reconcile([3.0, 0.0], [2.0, 0.0, 0.0], &prefs, &SolverConfig::default()).unwrap();
        assert_eq!(r.alpha, (1.0, 0.0));
    }

    #[test]
    fn log_round_trip() {
        let recs = vec![StepRecord { step: 1, l_rec: 2.5, l_cd: 0.125, alpha1: 0.9, alpha2: 0.1, s_size: 1, fw_iters: 7 }];
        let mut buf = Vec::new();
        write_step_log(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("step,L_rec,L_cd,alpha1,alpha2,S_size,fw_iters\n"));
        assert_eq!(read_step_log(buf.as_slice()).unwrap(), recs);
    }
}
