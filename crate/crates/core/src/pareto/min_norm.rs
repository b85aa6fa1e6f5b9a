use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights `(a1, a2)` on the simplex minimizing `‖a1·g1 + a2·g2‖`.
///
/// Parallel equal gradients have no unique minimizer and get `(0.5, 0.5)`.
pub fn min_norm_two(g1: &[f64], g2: &[f64]) -> Result<(f64, f64)> {
    if g1.len() != g2.len() {
        return Err(Error::Shape(format!("gradients of length {} and {}", g1.len(), g2.len())));
    }
    let n1: f64 = g1.iter().map(|x| x * x).sum();
    let n2: f64 = g2.iter().map(|x| x * x).sum();
    if n1 == 0.0 && n2 == 0.0 {
        return Err(Error::ZeroGradients);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in g1.iter().zip(g2) {
        let d = b - a;
        num += b * d;
        den += d * d;
    }
    Ok(two_task_weights(num, den, n1 + n2))
}

/// [`min_norm_two`] from inner products `⟨g1,g1⟩`, `⟨g1,g2⟩`, `⟨g2,g2⟩`.
pub fn min_norm_two_gram(g11: f64, g12: f64, g22: f64) -> Result<(f64, f64)> {
    if g11 == 0.0 && g22 == 0.0 {
        return Err(Error::ZeroGradients);
    }
    Ok(two_task_weights(g22 - g12, g11 - 2.0 * g12 + g22, g11 + g22))
}

fn two_task_weights(num: f64, den: f64, scale: f64) -> (f64, f64) {
    if den <= 1e-14 * scale {
        return (0.5, 0.5);
    }
    let a = (num / den).clamp(0.0, 1.0);
    (a, 1.0 - a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrankWolfeResult {
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// Step size of the last iteration fell below the tolerance.
    pub converged: bool,
    /// `‖Σ β g‖` after initialization and after every iteration.
    pub objective_trace: Vec<f64>,
}

/// Frank–Wolfe on the simplex for `min ‖Σ β_k g_k‖`, driven entirely by the
/// Gram matrix `gram[i][j] = ⟨g_i, g_j⟩`.
pub fn frank_wolfe_gram(gram: &[Vec<f64>], max_iterations: usize, tolerance: f64) -> Result<FrankWolfeResult> {
    let n = gram.len();
    if n == 0 {
        return Err(Error::EmptyGradientSet);
    }
    if gram.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("gram matrix must be square".into()));
    }
    if gram.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("gradient inner products".into()));
    }
    let quad = |b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += b[i] * gram[i][j] * b[j];
            }
        }
        s.max(0.0)
    };
    let mut beta = vec![1.0 / n as f64; n];
    let mut trace = vec![quad(&beta).sqrt()];
    if n == 1 {
        return Ok(FrankWolfeResult { weights: beta, iterations: 0, converged: true, objective_trace: trace });
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        let mb: Vec<f64> = (0..n).map(|i| (0..n).map(|j| gram[i][j] * beta[j]).sum()).collect();
        let t = (0..n).min_by(|&a, &b| mb[a].total_cmp(&mb[b])).expect("non-empty");
        let vv = beta.iter().zip(&mb).map(|(b, m)| b * m).sum::<f64>();
        let vt = mb[t];
        let tt = gram[t][t];
        let den = vv - 2.0 * vt + tt;
        let eta = if den <= 1e-14 * (vv.abs() + tt.abs()) { 0.0 } else { ((vv - vt) / den).clamp(0.0, 1.0) };
        for b in beta.iter_mut() {
            *b *= 1.0 - eta;
        }
        beta[t] += eta;
        iterations += 1;
        trace.push(quad(&beta).sqrt());
        if eta < tolerance {
            converged = true;
            break;
        }
    }
    Ok(FrankWolfeResult { weights: beta, iterations, converged, objective_trace: trace })
}

/// Gram matrix of a set of equal-length vectors.
pub fn gram_matrix(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if let Some(first) = vectors.first() {
        if vectors.iter().any(|v| v.len() != first.len()) {
            return Err(Error::Shape("gradients differ in length".into()));
        }
    }
    let n = vectors.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let d = crate::numerics::kernels::dot(&vectors[i], &vectors[j]);
            g[i][j] = d;
            g[j][i] = d;
        }
    }
    Ok(g)
}
