mod common;

use common::{full_model_fd, FdLoss};
use paretorec::data::{synthesize, Dataset, Scenario, SynthConfig};
use paretorec::eval::EvalConfig;
use paretorec::model::ModelConfig;
use paretorec::train::{sweep_static_weights, test_report, train, LrSchedule, Method, TrainConfig, TrainOutcome};

fn tiny_data(domains: usize, seed: u64) -> Dataset {
    let scenario = if domains > 1 { Scenario::Mixed } else { Scenario::Complementary };
    let cfg = SynthConfig {
        scenario,
        users: 80,
        domains,
        items_per_domain: 40,
        clusters: 4,
        mean_length: 8,
        seed,
        ..Default::default()
    };
    synthesize(&cfg).unwrap().0
}

fn tiny(method: Method) -> TrainConfig {
    TrainConfig {
        method,
        model: ModelConfig { embed_dim: 8, num_layers: 1, num_heads: 2, max_seq_len: 8, ..Default::default() },
        learning_rate: 5e-3,
        warmup_steps: 5,
        max_steps: 24,
        batch_size: 16,
        validation_interval: 8,
        patience_steps: 16,
        train_negatives: Some(10),
        eval: EvalConfig { negatives: 20, ..Default::default() },
        ..Default::default()
    }
}

fn same_params(a: &TrainOutcome, b: &TrainOutcome) -> bool {
    a.state.params.entries().iter().zip(b.state.params.entries()).all(|(x, y)| x.value.data() == y.value.data())
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for seed in [0, 1] {
        let rec = full_model_fd(FdLoss::Rec, seed);
        let cd = full_model_fd(FdLoss::Cd, seed);
        assert!(rec < 1e-3, "rec {rec}");
        assert!(cd < 1e-3, "cd {cd}");
    }
}

#[test]
fn static_one_zero_is_naive() {
    let data = tiny_data(2, 1);
    let a = train(&tiny(Method::NaiveCrossDomain), &data).unwrap();
    let b = train(&tiny(Method::StaticWeight { alpha_rec: 1.0, alpha_cd: 0.0 }), &data).unwrap();
    let la: Vec<f64> = a.log.iter().map(|r| r.l_rec).collect();
    let lb: Vec<f64> = b.log.iter().map(|r| r.l_rec).collect();
    assert_eq!(la, lb);
    assert!(same_params(&a, &b));
}

#[test]
fn single_domain_on_one_domain_is_naive() {
    let data = tiny_data(1, 2);
    let a = train(&tiny(Method::NaiveCrossDomain), &data).unwrap();
    let b = train(&tiny(Method::SingleDomain { domain: 0 }), &data).unwrap();
    assert!(same_params(&a, &b));
    assert_eq!(a.validation, b.validation);
}

#[test]
fn training_is_deterministic() {
    let data = tiny_data(2, 3);
    for method in [Method::Autocdsr, Method::NaiveCrossDomain] {
        let a = train(&tiny(method), &data).unwrap();
        let b = train(&tiny(method), &data).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.validation, b.validation);
        assert!(same_params(&a, &b));
        let ra = serde_json::to_string(&test_report(&[&a], &data).unwrap()).unwrap();
        let rb = serde_json::to_string(&test_report(&[&b], &data).unwrap()).unwrap();
        assert_eq!(ra, rb);
    }
    let c = train(&TrainConfig { seed: 9, ..tiny(Method::Autocdsr) }, &data).unwrap();
    let a = train(&tiny(Method::Autocdsr), &data).unwrap();
    assert!(!same_params(&a, &c));
}

#[test]
fn autocdsr_logs_reconciled_weights() {
    let data = tiny_data(2, 4);
    let o = train(&tiny(Method::Autocdsr), &data).unwrap();
    assert_eq!(o.log.len(), o.steps);
    for r in &o.log {
        assert!((r.alpha1 + r.alpha2 - 1.0).abs() < 1e-9);
        assert!(r.alpha1 >= 0.0 && r.alpha2 >= 0.0);
        assert!(r.fw_iters <= 100);
    }
    let naive = train(&tiny(Method::NaiveCrossDomain), &data).unwrap();
    assert!(naive.log.iter().all(|r| r.alpha1 == 1.0 && r.alpha2 == 0.0));
}

#[test]
fn autocdsr_plus_trains() {
    let data = tiny_data(2, 5);
    let mut cfg = tiny(Method::AutocdsrPlus);
    cfg.model.ib_tokens = 2;
    let o = train(&cfg, &data).unwrap();
    assert!(o.log.iter().all(|r| r.l_rec.is_finite() && r.l_cd.is_finite()));
    assert!(test_report(&[&o], &data).unwrap().macro_recall(10) >= 0.0);
}

#[test]
fn validation_runs_on_schedule_and_at_the_end() {
    let data = tiny_data(2, 6);
    let cfg = TrainConfig { max_steps: 20, patience_steps: 40, ..tiny(Method::NaiveCrossDomain) };
    let o = train(&cfg, &data).unwrap();
    let steps: Vec<usize> = o.validation.iter().map(|v| v.step).collect();
    assert_eq!(steps, vec![8, 16, 20]);
    let best = o.validation.iter().filter(|v| v.best).last().unwrap();
    assert_eq!(best.step, o.best_step);
    let top = o.validation.iter().map(|v| v.ndcg10).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(o.best_validation, top);
}

#[test]
fn early_stop_keeps_best_state() {
    let data = tiny_data(2, 7);
    // a huge learning rate makes validation peak early and then degrade
    let cfg = TrainConfig {
        learning_rate: 0.5,
        warmup_steps: 1,
        max_steps: 400,
        validation_interval: 4,
        patience_steps: 8,
        grad_clip: 0.0,
        ..tiny(Method::NaiveCrossDomain)
    };
    let o = train(&cfg, &data).unwrap();
    if o.stopped_early {
        assert_eq!(o.steps, o.best_step + cfg.patience_steps);
    } else {
        assert_eq!(o.steps, cfg.max_steps);
    }
    let best = o.validation.iter().find(|v| v.step == o.best_step).unwrap();
    assert!(best.best);
    assert!(o.validation.iter().all(|v| v.ndcg10 <= o.best_validation));
    // the kept state scores exactly the recorded best on the validation targets
    let again = paretorec::train::test_outcomes(&[&o], &data, paretorec::data::Holdout::Valid).unwrap().1;
    let report = paretorec::eval::summarize("x", &again, &data.catalog, &EvalConfig { ks: vec![10], ..cfg.eval.clone() });
    assert_eq!(report.overall.ndcg[0], o.best_validation);
}

#[test]
fn schedule_peaks_at_warmup_and_ends_at_floor() {
    let s = LrSchedule { peak: 1e-3, floor: 1e-5, warmup: 100, total: 1000 };
    assert!((s.at(100) - 1e-3).abs() < 1e-15);
    assert!((s.at(1000) - 1e-5).abs() < 1e-15);
    let xs: Vec<f64> = (1..=1000).map(|t| s.at(t)).collect();
    assert!(xs[..100].windows(2).all(|w| w[0] < w[1]));
    assert!(xs[99..].windows(2).all(|w| w[0] >= w[1]));
    assert!(xs.windows(2).all(|w| (w[0] - w[1]).abs() < 2e-5));
}

#[test]
fn sweep_returns_one_point_per_weight() {
    let data = tiny_data(2, 8);
    let grid = [(1.0, 0.0), (0.5, 0.5)];
    let cfg = TrainConfig { max_steps: 8, ..tiny(Method::NaiveCrossDomain) };
    let points = sweep_static_weights(&cfg, &data, &grid).unwrap();
    assert_eq!(points.len(), 2);
    for (p, g) in points.iter().zip(grid) {
        assert_eq!((p.alpha_rec, p.alpha_cd), g);
        assert_eq!(p.report.model, format!("static-{}-{}", g.0, g.1));
    }
    assert!(sweep_static_weights(&cfg, &data, &[]).is_err());
}

#[test]
fn bad_configs_are_rejected() {
    let data = tiny_data(2, 9);
    let err = train(&tiny(Method::SingleDomain { domain: 5 }), &data).unwrap_err();
    assert!(err.to_string().contains("method.domain"), "{err}");
    let err = train(&TrainConfig { learning_rate: 0.0, ..tiny(Method::Autocdsr) }, &data).unwrap_err();
    assert!(err.to_string().contains("learning_rate"), "{err}");
}
