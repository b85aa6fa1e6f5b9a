mod common;

use paretorec::pareto::{
    active_constraints, frank_wolfe_min_norm, min_norm_two, preference_vectors, reconcile, GradientBundle,
    PreferenceSet, SolverConfig,
};
use proptest::prelude::*;
use rand::Rng;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn combo(vs: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; vs[0].len()];
    for (v, &b) in vs.iter().zip(w) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += b * x;
        }
    }
    out
}

/// All simplex points of dimension `n` on a grid with `steps` divisions.
fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(n, left - k, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, steps, steps, &mut Vec::new(), &mut out);
    out
}

fn grid_min(vs: &[Vec<f64>], steps: usize) -> (Vec<f64>, f64) {
    simplex_grid(vs.len(), steps)
        .into_iter()
        .map(|w| {
            let n = norm(&combo(vs, &w));
            (w, n)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

#[test]
fn min_norm_two_grid_examples() {
    for (g1, g2) in [(vec![2.0, 0.0], vec![1.0, 0.0]), (vec![1.0, 0.0], vec![0.0, 2.0])] {
        let (w, best) = grid_min(&[g1.clone(), g2.clone()], 10_000);
        let (a1, a2) = min_norm_two(&g1, &g2).unwrap();
        assert!((a1 - w[0]).abs() < 1e-4);
        assert!(norm(&combo(&[g1, g2], &[a1, a2])) <= best + 1e-12);
    }
    let (a1, a2) = min_norm_two(&[1.0, 0.0], &[0.0, 2.0]).unwrap();
    let d = combo(&[vec![1.0, 0.0], vec![0.0, 2.0]], &[a1, a2]);
    assert!((d[0] - 0.8).abs() < 1e-12 && (d[1] - 0.4).abs() < 1e-12);
}

#[test]
fn frank_wolfe_ignores_dominated_gradient() {
    let bundle = GradientBundle::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0]]);
    let (w, _) = grid_min(&bundle.vectors, 100);
    assert!((w[0] - 0.5).abs() < 0.011 && (w[1] - 0.5).abs() < 0.011 && w[2] < 0.011);
    let r = frank_wolfe_min_norm(&bundle, &SolverConfig::default()).unwrap();
    assert!((r.weights[0] - 0.5).abs() < 0.01);
    assert!((r.weights[1] - 0.5).abs() < 0.01);
    assert!(r.weights[2] < 0.01);
}

#[test]
fn frank_wolfe_matches_two_task_closed_form() {
    let mut rng = common::rng(21);
    for _ in 0..100 {
        let dim = rng.gen_range(2..20);
        let g1: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g2: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a1, a2) = min_norm_two(&g1, &g2).unwrap();
        let r = frank_wolfe_min_norm(&GradientBundle::new(vec![g1.clone(), g2.clone()]), &SolverConfig::default())
            .unwrap();
        let closed = norm(&combo(&[g1.clone(), g2.clone()], &[a1, a2]));
        let fw = norm(&combo(&[g1, g2], &r.weights));
        assert!(fw - closed < 1e-6, "{fw} vs {closed}");
    }
}

fn toy_oracle(losses: [f64; 2], g1: &[f64], g2: &[f64], prefs: &PreferenceSet) -> (f64, f64) {
    let active = active_constraints(losses, prefs);
    let mut coef: Vec<[f64; 2]> = active
        .iter()
        .map(|&k| {
            let p = prefs.vectors[k];
            let c = prefs.vectors[prefs.chosen];
            [p[0] - c[0], p[1] - c[1]]
        })
        .collect();
    if !active.is_empty() {
        coef.push([1.0, 0.0]);
    }
    if active.is_empty() {
        coef = vec![[1.0, 0.0], [0.0, 1.0]];
    } else {
        coef.push([0.0, 1.0]);
    }
    let vs: Vec<Vec<f64>> = coef.iter().map(|c| vec![c[0] * g1[0] + c[1] * g2[0], c[0] * g1[1] + c[1] * g2[1]]).collect();
    // coarse grid, then a fine grid around the coarse winner
    let (w0, _) = grid_min(&vs, 100);
    let mut best = (w0.clone(), norm(&combo(&vs, &w0)));
    let n = vs.len();
    let fine = 0.0005;
    let span = 24i64;
    let mut idx = vec![-span; n - 1];
    loop {
        let mut w: Vec<f64> = w0[..n - 1].iter().zip(&idx).map(|(b, &k)| b + k as f64 * fine).collect();
        let last = 1.0 - w.iter().sum::<f64>();
        if w.iter().all(|&x| x >= 0.0) && last >= 0.0 {
            w.push(last);
            let v = norm(&combo(&vs, &w));
            if v < best.1 {
                best = (w, v);
            }
        }
        let mut k = 0;
        while k < n - 1 {
            idx[k] += 1;
            if idx[k] <= span {
                break;
            }
            idx[k] = -span;
            k += 1;
        }
        if k == n - 1 {
            break;
        }
    }
    let mut c = [0.0; 2];
    for (b, cf) in best.0.iter().zip(&coef) {
        c[0] += b * cf[0];
        c[1] += b * cf[1];
    }
    let c = [c[0].max(0.0), c[1].max(0.0)];
    let t = c[0] + c[1];
    if t > 0.0 {
        (c[0] / t, c[1] / t)
    } else {
        (1.0, 0.0)
    }
}

#[test]
fn reconciled_direction_matches_brute_force_on_quadratic_toys() {
    let prefs = preference_vectors(2).unwrap();
    let mut rng = common::rng(22);
    // run the solver to convergence; the default budget stops early on
    // degenerate sets where the optimum sits on a face of the simplex
    let cfg = SolverConfig { max_iterations: 100_000, tolerance: 1e-12, ..Default::default() };
    for _ in 0..40 {
        let a = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let b = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let theta = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let g1 = [theta[0] - a[0], theta[1] - a[1]];
        let g2 = [theta[0] - b[0], theta[1] - b[1]];
        let losses = [0.5 * norm(&g1).powi(2), 0.5 * norm(&g2).powi(2)];
        let gram = [g1[0] * g1[0] + g1[1] * g1[1], g1[0] * g2[0] + g1[1] * g2[1], g2[0] * g2[0] + g2[1] * g2[1]];
        let r = reconcile(losses, gram, &prefs, &cfg).unwrap();
        let want = toy_oracle(losses, &g1, &g2, &prefs);
        let d = [r.alpha.0 * g1[0] + r.alpha.1 * g2[0], r.alpha.0 * g1[1] + r.alpha.1 * g2[1]];
        let e = [want.0 * g1[0] + want.1 * g2[0], want.0 * g1[1] + want.1 * g2[1]];
        let scale = norm(&g1).max(norm(&g2));
        assert!(norm(&[d[0] - e[0], d[1] - e[1]]) < 1e-3 * scale, "{:?} vs {:?}", r.alpha, want);
    }
}

#[test]
fn reconciled_steps_never_raise_both_losses() {
    let prefs = PreferenceSet::new(5).unwrap();
    let cfg = SolverConfig::default();
    let mut rng = common::rng(23);
    for _ in 0..1000 {
        let a = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let b = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let (ca, cb) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
        let loss = |t: [f64; 2]| {
            [
                0.5 * ca * ((t[0] - a[0]).powi(2) + (t[1] - a[1]).powi(2)),
                0.5 * cb * ((t[0] - b[0]).powi(2) + (t[1] - b[1]).powi(2)),
            ]
        };
        let mut theta = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        for _ in 0..30 {
            let l = loss(theta);
            let g1 = [ca * (theta[0] - a[0]), ca * (theta[1] - a[1])];
            let g2 = [cb * (theta[0] - b[0]), cb * (theta[1] - b[1])];
            let gram = [g1[0] * g1[0] + g1[1] * g1[1], g1[0] * g2[0] + g1[1] * g2[1], g2[0] * g2[0] + g2[1] * g2[1]];
            let r = reconcile(l, gram, &prefs, &cfg).unwrap();
            assert!(r.alpha.0 >= 0.0 && r.alpha.1 >= 0.0 && (r.alpha.0 + r.alpha.1 - 1.0).abs() < 1e-12);
            let lr = 0.2;
            theta = [
                theta[0] - lr * (r.alpha.0 * g1[0] + r.alpha.1 * g2[0]),
                theta[1] - lr * (r.alpha.0 * g1[1] + r.alpha.1 * g2[1]),
            ];
            let next = loss(theta);
            assert!(!(next[0] > l[0] && next[1] > l[1]), "{l:?} -> {next:?}");
        }
    }
}

fn vectors_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6, 1usize..12).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n))
}

proptest! {
    #[test]
    fn min_norm_never_exceeds_either_gradient(
        g1 in prop::collection::vec(-10.0f64..10.0, 4),
        g2 in prop::collection::vec(-10.0f64..10.0, 4),
    ) {
        prop_assume!(norm(&g1) > 1e-9 || norm(&g2) > 1e-9);
        let (a1, a2) = min_norm_two(&g1, &g2).unwrap();
        prop_assert!(a1 >= 0.0 && a2 >= 0.0 && (a1 + a2 - 1.0).abs() < 1e-15);
        let n = norm(&combo(&[g1.clone(), g2.clone()], &[a1, a2]));
        prop_assert!(n <= norm(&g1).min(norm(&g2)) + 1e-12);
    }

    #[test]
    fn frank_wolfe_objective_is_monotone(vs in vectors_strategy()) {
        let r = frank_wolfe_min_norm(&GradientBundle::new(vs.clone()), &SolverConfig::default()).unwrap();
        // the trace comes from Gram quadratic forms; compare squares
        let scale = vs.iter().map(|v| norm(v).powi(2)).fold(0.0, f64::max);
        for w in r.objective_trace.windows(2) {
            prop_assert!(w[1] * w[1] <= w[0] * w[0] + 1e-12 * scale);
        }
        prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(r.weights.iter().all(|&b| b >= 0.0));
    }

    #[test]
    fn frank_wolfe_is_scale_equivariant(vs in vectors_strategy(), c in 0.01f64..100.0) {
        let cfg = SolverConfig::default();
        let a = frank_wolfe_min_norm(&GradientBundle::new(vs.clone()), &cfg).unwrap();
        let scaled: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().map(|x| x * c).collect()).collect();
        let b = frank_wolfe_min_norm(&GradientBundle::new(scaled), &cfg).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }
}
