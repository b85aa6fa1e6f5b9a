//! One PASS/FAIL line per acceptance criterion.
//!
//! The oracle and invariant criteria (1, 3, 4, 5, 9, 11) are also asserted.
//! The desk-scale experiments (6, 7, 8, 10) and the convergence rate in 2 are
//! reported without failing the suite, so a red line stays visible instead of
//! being tuned away.

mod common;

use std::time::Instant;

use common::{brute_cd, brute_ib, full_model_fd, ib_model, random_attention, FdLoss};
use paretorec::crossdomain::{
    build_ib_batch, build_ib_input, cross_domain_attention_score, ib_cross_domain_score, DomainMap,
};
use paretorec::data::{leave_one_out, save_tsv, synthesize, Dataset, Holdout, Scenario, SynthConfig};
use paretorec::eval::{
    evaluate, overhead_report, tail_mean, write_json, AttentionStats, EvalConfig, OracleScorer, RandomScorer,
    StrataTable, Stratum, OVERHEAD_WARMUP,
};
use paretorec::model::{forward, ModelConfig, Objective};
use paretorec::pareto::{frank_wolfe_gram, gram_matrix, min_norm_two, write_step_log, SolverConfig};
use paretorec::train::{
    attention_stats, test_outcomes, test_report, train, train_single_domain_models, train_unvalidated,
    write_validation_log, Method, TrainConfig, TrainOutcome,
};
use rand::Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Line {
    id: usize,
    pass: bool,
    asserted: bool,
}

fn report(lines: &mut Vec<Line>, id: usize, pass: bool, asserted: bool, detail: String) {
    println!("criterion {id}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    lines.push(Line { id, pass, asserted });
}

fn info(detail: String) {
    println!("info: {detail}");
}

fn gauss(r: &mut impl Rng) -> f64 {
    let u: f64 = r.gen_range(f64::MIN_POSITIVE..1.0);
    let v: f64 = r.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn norm_of(gram: &[Vec<f64>], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..w.len() {
        for j in 0..w.len() {
            s += w[i] * gram[i][j] * w[j];
        }
    }
    s.max(0.0).sqrt()
}

fn simplex_grid_min(gram: &[Vec<f64>], steps: usize) -> f64 {
    let n = gram.len();
    let mut best = f64::INFINITY;
    let mut w = vec![0.0; n];
    match n {
        1 => best = norm_of(gram, &[1.0]),
        2 => {
            for a in 0..=steps {
                w[0] = a as f64 / steps as f64;
                w[1] = 1.0 - w[0];
                best = best.min(norm_of(gram, &w));
            }
        }
        3 => {
            for a in 0..=steps {
                for b in 0..=steps - a {
                    w[0] = a as f64 / steps as f64;
                    w[1] = b as f64 / steps as f64;
                    w[2] = (steps - a - b) as f64 / steps as f64;
                    best = best.min(norm_of(gram, &w));
                }
            }
        }
        _ => unreachable!("at most three gradients"),
    }
    best
}

fn criterion_1(lines: &mut Vec<Line>) {
    let started = Instant::now();
    let mut r = common::rng(101);
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let d = r.gen_range(2..=1000);
        let g1: Vec<f64> = (0..d).map(|_| gauss(&mut r)).collect();
        let g2: Vec<f64> = (0..d).map(|_| gauss(&mut r)).collect();
        let (a1, a2) = min_norm_two(&g1, &g2).unwrap();
        let gram = gram_matrix(&[g1, g2]).unwrap();
        let ours = norm_of(&gram, &[a1, a2]);
        let grid = simplex_grid_min(&gram, 10_000);
        worst_gap = worst_gap.max(ours - grid);
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst_gap < 1e-6 && secs < 10.0;
    report(lines, 1, pass, true, format!("max(closed form - grid) = {worst_gap:.2e} over 1000 pairs, {secs:.1}s"));
}

fn criterion_2(lines: &mut Vec<Line>) {
    let started = Instant::now();
    let solver = SolverConfig::default();
    let mut r = common::rng(102);
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    let mut long_gap: f64 = f64::NEG_INFINITY;
    for _ in 0..200 {
        let n = r.gen_range(1..=3);
        let d = r.gen_range(2..=10);
        let vs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| gauss(&mut r)).collect()).collect();
        let gram = gram_matrix(&vs).unwrap();
        let fw = frank_wolfe_gram(&gram, solver.max_iterations, solver.tolerance).unwrap();
        let grid = simplex_grid_min(&gram, 100);
        worst_gap = worst_gap.max(norm_of(&gram, &fw.weights) - grid);
        let long = frank_wolfe_gram(&gram, 100_000, solver.tolerance).unwrap();
        long_gap = long_gap.max(norm_of(&gram, &long.weights) - grid);
    }
    info(format!("same 200 sets with a 100000-iteration budget: max(fw - grid) = {long_gap:.2e}"));
    let mut converged = 0;
    let mut by_size = [(0usize, 0usize); 4];
    for _ in 0..1000 {
        let n = r.gen_range(1..=3);
        let d = r.gen_range(2..=10);
        let vs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| gauss(&mut r)).collect()).collect();
        let fw = frank_wolfe_gram(&gram_matrix(&vs).unwrap(), solver.max_iterations, solver.tolerance).unwrap();
        by_size[n].1 += 1;
        if fw.converged {
            converged += 1;
            by_size[n].0 += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let rate = converged as f64 / 1000.0;
    let pass = worst_gap < 1e-2 && rate >= 0.95 && secs < 60.0;
    report(
        lines,
        2,
        pass,
        false,
        format!(
            "max(fw - grid) = {worst_gap:.2e} on 200 sets; converged {:.1}% of 1000 (by size 1/2/3: {}/{}, {}/{}, {}/{}); {secs:.1}s",
            rate * 100.0,
            by_size[1].0,
            by_size[1].1,
            by_size[2].0,
            by_size[2].1,
            by_size[3].0,
            by_size[3].1
        ),
    );
}

fn criterion_3(lines: &mut Vec<Line>) {
    let started = Instant::now();
    let rec = full_model_fd(FdLoss::Rec, 0);
    let cd = full_model_fd(FdLoss::Cd, 0);
    let secs = started.elapsed().as_secs_f64();
    let pass = rec < 1e-3 && cd < 1e-3 && secs < 60.0;
    report(lines, 3, pass, true, format!("worst relative error rec {rec:.2e}, cd {cd:.2e}; {secs:.1}s"));
}

fn criterion_4(lines: &mut Vec<Line>) {
    let mut r = common::rng(104);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = r.gen_range(2..14);
        let dom: Vec<Option<usize>> =
            (0..len).map(|_| if r.gen_bool(0.15) { None } else { Some(r.gen_range(0..3)) }).collect();
        let live: Vec<bool> = dom.iter().map(Option::is_some).collect();
        let a = random_attention(&mut r, 2, 3, len, &live);
        let got = cross_domain_attention_score(&a, &DomainMap::new(dom.clone())).unwrap();
        worst = worst.max((got - brute_cd(&a, &dom)).abs());
    }
    let space = paretorec::model::TokenSpace { items: 60, domains: 3, ib_per_domain: 2 };
    for _ in 0..100 {
        let len = r.gen_range(1..12);
        let seq: Vec<(usize, usize)> = (0..len).map(|_| (r.gen_range(0..60), r.gen_range(0..3))).collect();
        let s = build_ib_input(&seq, 2, &space, Objective::CausalNextItem, true).unwrap();
        let n = s.layout.total_len();
        let a = random_attention(&mut r, 2, 2, n, &vec![true; n]);
        let got = ib_cross_domain_score(&a, &s.layout).unwrap();
        worst = worst.max((got - brute_ib(&a, &s.layout)).abs());
    }
    report(lines, 4, worst <= 1e-12, true, format!("max |score - brute force| = {worst:.2e} over 2 x 100 tensors"));
}

fn criterion_5(lines: &mut Vec<Line>) {
    let state = ib_model();
    let space = state.config.tokens();
    let mut r = common::rng(105);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let na = r.gen_range(1..6);
        let nb = r.gen_range(1..6);
        let a: Vec<usize> = (0..na).map(|_| r.gen_range(0..15)).collect();
        let b: Vec<usize> = (0..nb).map(|_| r.gen_range(15..30)).collect();
        let joint = build_ib_batch(&[(0, a.clone()), (1, b.clone())], 2, &space, Objective::CausalNextItem, false).unwrap();
        let alone_a = build_ib_batch(&[(0, a)], 2, &space, Objective::CausalNextItem, false).unwrap();
        let alone_b = build_ib_batch(&[(1, b)], 2, &space, Objective::CausalNextItem, false).unwrap();
        let out = forward(&state, &joint.input, 0).unwrap();
        let oa = forward(&state, &alone_a.input, 0).unwrap();
        let ob = forward(&state, &alone_b.input, 0).unwrap();
        for row in 0..2 + na {
            for (x, y) in out.hidden.row(row).iter().zip(oa.hidden.row(row)) {
                worst = worst.max((x - y).abs());
            }
        }
        for row in 0..2 + nb {
            for (x, y) in out.hidden.row(2 + na + row).iter().zip(ob.hidden.row(row)) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    report(lines, 5, worst <= 1e-12, true, format!("max |joint - separate| = {worst:.2e} over 50 inputs"));
}

fn desk_data(scenario: Scenario, seed: u64) -> Dataset {
    synthesize(&SynthConfig { scenario, users: 2000, domains: 2, items_per_domain: 1000, seed, ..Default::default() })
        .unwrap()
        .0
}

fn desk(method: Method, seed: u64) -> TrainConfig {
    TrainConfig {
        method,
        model: ModelConfig { embed_dim: 16, num_layers: 2, num_heads: 2, max_seq_len: 20, ..Default::default() },
        learning_rate: 5e-3,
        warmup_steps: 100,
        max_steps: 1000,
        batch_size: 64,
        validation_interval: 250,
        patience_steps: 1000,
        train_negatives: Some(100),
        seed,
        ..Default::default()
    }
}

struct Trio {
    single: Vec<TrainOutcome>,
    naive: TrainOutcome,
    auto: TrainOutcome,
}

fn recall10(models: &[&TrainOutcome], data: &Dataset) -> f64 {
    test_report(models, data).unwrap().macro_recall(10)
}

fn trio(data: &Dataset, seed: u64) -> Trio {
    Trio {
        single: train_single_domain_models(&desk(Method::NaiveCrossDomain, seed), data).unwrap(),
        naive: train(&desk(Method::NaiveCrossDomain, seed), data).unwrap(),
        auto: train(&desk(Method::Autocdsr, seed), data).unwrap(),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fmt(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

/// Mean cross-domain attention of each model in the stratum where the
/// single-domain model is right and the cross-domain model is wrong.
fn strata_line(data: &Dataset, t: &Trio) {
    let split = leave_one_out(&data.sequences);
    let targets = split.targets(Holdout::Test);
    let singles: Vec<&TrainOutcome> = t.single.iter().collect();
    let (_, single_out) = test_outcomes(&singles, data, Holdout::Test).unwrap();
    let mut parts = Vec::new();
    for (name, o) in [("naive", &t.naive), ("autocdsr", &t.auto)] {
        let (_, cross_out) = test_outcomes(&[o], data, Holdout::Test).unwrap();
        let attention: Vec<(usize, AttentionStats)> = targets
            .iter()
            .filter_map(|tg| attention_stats(&o.state, tg.history, tg.target.domain).unwrap().map(|a| (tg.user, a)))
            .collect();
        let table = StrataTable::build(&single_out, &cross_out, &attention, 10).unwrap();
        let row = table.row(Stratum::SingleOnly);
        parts.push((name, row.users, row.mean_cross));
    }
    let (naive, auto) = (parts[0].2, parts[1].2);
    info(format!(
        "strata (contradictory, seed 0): mean a_cd in single-right/cross-wrong stratum naive {naive:.4} ({} users), autocdsr {auto:.4} ({} users), change {:+.1}%",
        parts[0].1,
        parts[1].1,
        (auto / naive - 1.0) * 100.0
    ));
}

fn criterion_6(lines: &mut Vec<Line>) {
    let started = Instant::now();
    let (mut s, mut n, mut a) = (Vec::new(), Vec::new(), Vec::new());
    for seed in SEEDS {
        let data = desk_data(Scenario::Contradictory, seed);
        let t = trio(&data, seed);
        let singles: Vec<&TrainOutcome> = t.single.iter().collect();
        s.push(recall10(&singles, &data));
        n.push(recall10(&[&t.naive], &data));
        a.push(recall10(&[&t.auto], &data));
        if seed == 0 {
            strata_line(&data, &t);
        }
    }
    let minutes = started.elapsed().as_secs_f64() / 60.0;
    let (ms, mn, ma) = (mean(&s), mean(&n), mean(&a));
    let pass = ma >= mn && ma >= 0.95 * ms && minutes < 30.0;
    report(
        lines,
        6,
        pass,
        false,
        format!(
            "contradictory R@10 means single {ms:.4}, naive {mn:.4}, autocdsr {ma:.4} (autocdsr/single {:.3}); {minutes:.1} min; per seed single [{}] naive [{}] autocdsr [{}]",
            ma / ms,
            fmt(&s),
            fmt(&n),
            fmt(&a)
        ),
    );
}

/// Also returns the final-20% mean alpha2 of each autocdsr run, which are the
/// uncorrupted runs of criterion 8.
fn criterion_7(lines: &mut Vec<Line>) -> Vec<f64> {
    let started = Instant::now();
    let (mut s, mut n, mut a, mut tails) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for seed in SEEDS {
        let data = desk_data(Scenario::Complementary, seed);
        let t = trio(&data, seed);
        let singles: Vec<&TrainOutcome> = t.single.iter().collect();
        s.push(recall10(&singles, &data));
        n.push(recall10(&[&t.naive], &data));
        a.push(recall10(&[&t.auto], &data));
        tails.push(tail_mean(&t.auto.log.iter().map(|r| r.alpha2).collect::<Vec<_>>(), 0.2));
    }
    let minutes = started.elapsed().as_secs_f64() / 60.0;
    let (ms, mn, ma) = (mean(&s), mean(&n), mean(&a));
    let pass = mn > ms && ma >= mn;
    report(
        lines,
        7,
        pass,
        false,
        format!(
            "complementary R@10 means single {ms:.4}, naive {mn:.4}, autocdsr {ma:.4}; {minutes:.1} min; per seed single [{}] naive [{}] autocdsr [{}]",
            fmt(&s),
            fmt(&n),
            fmt(&a)
        ),
    );
    tails
}

fn criterion_8(lines: &mut Vec<Line>, clean_tails: Vec<f64>) {
    let mut means = vec![mean(&clean_tails)];
    let mut per_rate = vec![clean_tails];
    for rate in [0.25, 0.5] {
        let tails: Vec<f64> = SEEDS
            .iter()
            .map(|&seed| {
                let data = desk_data(Scenario::Complementary, seed);
                let o = train(&TrainConfig { corruption_rate: rate, ..desk(Method::Autocdsr, seed) }, &data).unwrap();
                tail_mean(&o.log.iter().map(|r| r.alpha2).collect::<Vec<_>>(), 0.2)
            })
            .collect();
        means.push(mean(&tails));
        per_rate.push(tails);
    }
    let pass = means.windows(2).all(|w| w[0] >= w[1]);
    report(
        lines,
        8,
        pass,
        false,
        format!(
            "final-20% mean alpha2 at corruption 0 / 0.25 / 0.5: {:.4} / {:.4} / {:.4}; per seed [{}] [{}] [{}]",
            means[0],
            means[1],
            means[2],
            fmt(&per_rate[0]),
            fmt(&per_rate[1]),
            fmt(&per_rate[2])
        ),
    );
}

fn criterion_9(lines: &mut Vec<Line>) {
    let data = desk_data(Scenario::Mixed, 9);
    let split = leave_one_out(&data.sequences);
    let targets = split.targets(Holdout::Test);
    let cfg = EvalConfig::default();
    let random = evaluate(&RandomScorer::new(9), &targets, &data.catalog, &cfg).unwrap();
    let oracle = evaluate(&OracleScorer::new(&targets), &targets, &data.catalog, &cfg).unwrap();
    let k10 = cfg.ks.iter().position(|&k| k == 10).unwrap();
    let r = random.overall.recall[k10];
    let perfect = oracle.overall.recall.iter().chain(&oracle.overall.ndcg).all(|&v| v == 1.0);
    let pass = targets.len() >= 2000 && (r - 0.10).abs() <= 0.02 && perfect;
    report(
        lines,
        9,
        pass,
        true,
        format!("random R@10 {r:.4} over {} targets; oracle all metrics 1.0: {perfect}", targets.len()),
    );
}

fn criterion_10(lines: &mut Vec<Line>) {
    let data = desk_data(Scenario::Complementary, 0);
    let steps = OVERHEAD_WARMUP + 220;
    let base = TrainConfig { max_steps: steps, ..desk(Method::NaiveCrossDomain, 0) };
    let naive = train_unvalidated(&base, &data).unwrap();
    let auto = train_unvalidated(&TrainConfig { method: Method::Autocdsr, ..base.clone() }, &data).unwrap();
    let mut plus_cfg = TrainConfig { method: Method::AutocdsrPlus, ..base.clone() };
    plus_cfg.model.ib_tokens = 2;
    let plus = train_unvalidated(&plus_cfg, &data).unwrap();
    let rep = overhead_report(&naive.timed_run(), &[auto.timed_run(), plus.timed_run()], OVERHEAD_WARMUP).unwrap();
    let over = rep.overhead_of("autocdsr").unwrap();
    let over_plus = rep.overhead_of("autocdsr-plus").unwrap();
    let ips = |label: &str| rep.rows.iter().find(|r| r.label == label).unwrap().iterations_per_second;
    report(
        lines,
        10,
        over <= 30.0,
        false,
        format!(
            "autocdsr overhead {over:.1}% vs naive ({:.1} vs {:.1} it/s, {} timed steps)",
            ips("autocdsr"),
            ips("naive-cross-domain"),
            rep.rows[0].steps
        ),
    );
    info(format!("autocdsr-plus overhead {over_plus:.1}% vs naive; slower than autocdsr: {}", over_plus > over));
}

/// Every artifact of a small pipeline run, as bytes.
fn pipeline_bytes(dir: &std::path::Path) -> Vec<Vec<u8>> {
    let (data, truth) =
        synthesize(&SynthConfig { scenario: Scenario::Mixed, users: 150, items_per_domain: 120, clusters: 6, seed: 11, ..Default::default() })
            .unwrap();
    save_tsv(&dir.join("data.tsv"), &data).unwrap();
    let cfg = TrainConfig {
        method: Method::Autocdsr,
        model: ModelConfig { embed_dim: 8, num_layers: 1, num_heads: 2, max_seq_len: 10, ..Default::default() },
        learning_rate: 5e-3,
        warmup_steps: 5,
        max_steps: 30,
        batch_size: 16,
        validation_interval: 10,
        patience_steps: 20,
        train_negatives: Some(20),
        corruption_rate: 0.1,
        seed: 3,
        ..Default::default()
    };
    let o = train(&cfg, &data).unwrap();
    o.save_checkpoint(&dir.join("model.ckpt")).unwrap();
    let mut steps = Vec::new();
    write_step_log(&mut steps, &o.log).unwrap();
    let mut valid = Vec::new();
    write_validation_log(&mut valid, &o.validation).unwrap();
    let mut rep = Vec::new();
    write_json(&mut rep, &test_report(&[&o], &data).unwrap()).unwrap();
    vec![
        std::fs::read(dir.join("data.tsv")).unwrap(),
        serde_json::to_vec(&truth).unwrap(),
        std::fs::read(dir.join("model.ckpt")).unwrap(),
        steps,
        valid,
        rep,
    ]
}

fn criterion_11(lines: &mut Vec<Line>) {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let x = pipeline_bytes(a.path());
    let y = pipeline_bytes(b.path());
    let same = x == y;
    let bytes: usize = x.iter().map(Vec::len).sum();
    report(lines, 11, same, true, format!("two identical runs, {bytes} bytes of data, checkpoint, logs and report compared"));
}

#[test]
fn acceptance() {
    let mut lines = Vec::new();
    criterion_1(&mut lines);
    criterion_2(&mut lines);
    criterion_3(&mut lines);
    criterion_4(&mut lines);
    criterion_5(&mut lines);
    criterion_9(&mut lines);
    criterion_11(&mut lines);
    criterion_10(&mut lines);
    criterion_6(&mut lines);
    let tails = criterion_7(&mut lines);
    criterion_8(&mut lines, tails);

    lines.sort_by_key(|l| l.id);
    let red: Vec<usize> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!("summary: {} of {} criteria pass; red: {red:?}", lines.len() - red.len(), lines.len());
    let broken: Vec<usize> = lines.iter().filter(|l| l.asserted && !l.pass).map(|l| l.id).collect();
    assert!(broken.is_empty(), "oracle criteria failed: {broken:?}");
}
