use std::borrow::Cow;
use std::time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::config::{Method, TrainConfig};
use super::inputs::{domain_pools, prepare_example, stack, Prepared, StackedBatch};
use super::optim::{clip_global_norm, AdamW, LrSchedule};
use super::scorer::ModelScorer;
use crate::crossdomain::attention_mass_loss_on;
use crate::data::{corrupt_domains, leave_one_out, make_batches, BatchSpec, Dataset, Event, Holdout, Target};
use crate::error::{Error, Result};
use crate::eval::{evaluate, rank_targets, summarize, EvalConfig, EvalReport, Outcome, TimedRun};
use crate::model::{checkpoint, encode, recommendation_loss, static_combined_loss, EncoderState};
use crate::numerics::{rng_for, Rng, Tape, Tensor};
use crate::pareto::{reconcile, scoped_gram, PreferenceSet, StepRecord};

/// Stream offset separating training negatives from batching streams.
const NEGATIVE_STREAM: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub step: usize,
    pub ndcg10: f64,
    pub recall10: f64,
    pub best: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Config with dataset sizes filled in.
    pub config: TrainConfig,
    /// Parameters at the best validation point.
    pub state: EncoderState,
    pub best_step: usize,
    pub best_validation: f64,
    pub steps: usize,
    pub stopped_early: bool,
    pub log: Vec<StepRecord>,
    pub validation: Vec<ValidationRecord>,
    /// Wall-clock seconds of every update (not part of the reproducible output).
    pub step_seconds: Vec<f64>,
}

impl TrainOutcome {
    pub fn checkpoint_meta(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "best_step": self.best_step,
            "best_validation": self.best_validation,
            "steps": self.steps,
        })
    }

    pub fn save_checkpoint(&self, path: &std::path::Path) -> Result<()> {
        checkpoint::save(path, &self.state, &self.checkpoint_meta())
    }

    pub fn scorer(&self) -> ModelScorer {
        match self.config.method {
            Method::SingleDomain { domain } => ModelScorer::single_domain(self.config.method.label(), vec![(domain, self.state.clone())]),
            m => ModelScorer::cross_domain(m.label(), self.state.clone()),
        }
    }

    pub fn timed_run(&self) -> TimedRun {
        TimedRun { label: self.config.method.label(), step_seconds: self.step_seconds.clone() }
    }
}

pub fn write_validation_log(out: impl std::io::Write, records: &[ValidationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Training prefixes and validation targets as seen by one method.
struct Views<'a> {
    train: Vec<Cow<'a, [Event]>>,
    valid: Vec<Target<'a>>,
}

fn views<'a>(cfg: &TrainConfig, data: &'a Dataset, corrupted: Option<&'a [crate::data::InteractionSequence]>) -> Views<'a> {
    let split = leave_one_out(&data.sequences);
    let source = corrupted.unwrap_or(&data.sequences);
    let domain = match cfg.method {
        Method::SingleDomain { domain } => Some(domain),
        _ => None,
    };
    let train = split
        .users()
        .iter()
        .map(|&u| {
            let e = &source[u].events;
            let prefix = &e[..e.len() - 2];
            match domain {
                Some(d) => Cow::Owned(prefix.iter().filter(|x| x.domain == d).copied().collect()),
                None => Cow::Borrowed(prefix),
            }
        })
        .collect();
    let valid = split.targets(Holdout::Valid).into_iter().filter(|t| domain.map_or(true, |d| t.target.domain == d)).collect();
    Views { train, valid }
}

fn sample_negatives(pools: &[Vec<usize>], items: &[usize], domains: &[usize], n: usize, r: &mut Rng) -> Result<Vec<Vec<usize>>> {
    items
        .iter()
        .zip(domains)
        .map(|(&item, &d)| {
            let pool = &pools[d];
            let at = pool.binary_search(&item).map_err(|_| Error::UnknownDomain(format!("item {item} outside domain {d}")))?;
            if pool.len() - 1 < n {
                return Err(Error::config("train_negatives", format!("domain {d} has only {} other items", pool.len() - 1)));
            }
            Ok(index::sample(r, pool.len() - 1, n).into_iter().map(|k| pool[if k >= at { k + 1 } else { k }]).collect())
        })
        .collect()
}

/// Gradients for one batch and the log entry describing how they were combined.
fn step_gradients(
    state: &EncoderState,
    cfg: &TrainConfig,
    prefs: &PreferenceSet,
    sb: &StackedBatch,
    negatives: Option<&[Vec<usize>]>,
) -> Result<(Vec<Tensor>, StepRecord)> {
    let mut tape = Tape::with_params(&state.params);
    let enc = encode(&mut tape, state, &sb.batch)?;
    let user = tape.select_rows(enc.hidden, &sb.rows)?;
    let table = tape.param(state.item_embedding);
    let l_rec = recommendation_loss(&mut tape, user, table, state.config.vocab_size, &sb.items, negatives)?;
    let nodes = if cfg.cd_on_raw_scores { &enc.scores } else { &enc.attention };
    let l_cd = attention_mass_loss_on(&mut tape, nodes, &enc, &sb.pairs, &sb.content, cfg.cd_loss)?;
    let (rec_v, cd_v) = (tape.value(l_rec).item(), tape.value(l_cd).item());
    let mut record =
        StepRecord { step: 0, l_rec: rec_v, l_cd: cd_v, alpha1: 1.0, alpha2: 0.0, s_size: 0, fw_iters: 0 };
    let grads = match cfg.method {
        Method::SingleDomain { .. } | Method::NaiveCrossDomain => tape.backward(l_rec)?.into_param_grads(&state.params),
        Method::StaticWeight { alpha_rec, alpha_cd } => {
            let total = static_combined_loss(&mut tape, l_rec, l_cd, alpha_rec, alpha_cd)?;
            record.alpha1 = alpha_rec;
            record.alpha2 = alpha_cd;
            tape.backward(total)?.into_param_grads(&state.params)
        }
        Method::Autocdsr | Method::AutocdsrPlus => {
            let g_rec = tape.backward(l_rec)?.into_param_grads(&state.params);
            let g_cd = tape.backward(l_cd)?.into_param_grads(&state.params);
            let gram = scoped_gram(&g_rec, &g_cd, &state.params, cfg.solver.scope)?;
            let r = reconcile([rec_v, cd_v], gram, prefs, &cfg.solver)?;
            record.alpha1 = r.alpha.0;
            record.alpha2 = r.alpha.1;
            record.s_size = r.active;
            record.fw_iters = r.fw_iterations;
            let (a1, a2) = r.alpha;
            g_rec
                .into_iter()
                .zip(g_cd)
                .map(|(a, b)| {
                    let data = a.data().iter().zip(b.data()).map(|(x, y)| a1 * x + a2 * y).collect();
                    Tensor::new(a.shape().to_vec(), data)
                })
                .collect::<Result<_>>()?
        }
    };
    Ok((grads, record))
}

/// Validation NDCG@10 and Recall@10.
fn validate(state: &EncoderState, cfg: &TrainConfig, targets: &[Target<'_>], data: &Dataset) -> Result<(f64, f64)> {
    let scorer = match cfg.method {
        Method::SingleDomain { domain } => ModelScorer::single_domain("valid", vec![(domain, state.clone())]),
        _ => ModelScorer::cross_domain("valid", state.clone()),
    };
    let ecfg = EvalConfig { ks: vec![10], ..cfg.eval.clone() };
    let report = evaluate(&scorer, targets, &data.catalog, &ecfg)?;
    Ok((report.overall.ndcg[0], report.overall.recall[0]))
}

fn diverged(e: Error, step: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged { step, batch, rec: f64::NAN, cd: f64::NAN },
        other => other,
    }
}

/// Trains `cfg.method` on the leave-one-out training prefixes of `data`,
/// validating every `validation_interval` steps and keeping the best state.
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    run(cfg, data, true)
}

/// Runs the step budget without validation; used to time steps.
pub fn train_unvalidated(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    run(cfg, data, false)
}

fn run(cfg: &TrainConfig, data: &Dataset, with_validation: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let catalog = &data.catalog;
    if let Method::SingleDomain { domain } = cfg.method {
        if domain >= catalog.num_domains() {
            return Err(Error::config("method.domain", format!("dataset has {} domains", catalog.num_domains())));
        }
    }
    let model = cfg.resolved_model(catalog.num_items(), catalog.num_domains())?;
    let cfg = TrainConfig { model: model.clone(), ..cfg.clone() };
    let corrupted = (cfg.corruption_rate > 0.0)
        .then(|| corrupt_domains(&data.sequences, catalog.num_domains(), cfg.corruption_rate, cfg.seed));
    let v = views(&cfg, data, corrupted.as_deref());
    if with_validation && v.valid.is_empty() {
        return Err(Error::EmptyTestView);
    }
    let view: Vec<&[Event]> = v.train.iter().map(|c| c.as_ref()).collect();
    let space = model.tokens();
    let spec = BatchSpec {
        batch_size: cfg.batch_size,
        max_len: model.max_seq_len,
        objective: model.objective,
        mask_token: space.mask(),
        mask_probability: model.mask_probability,
    };
    let pools = domain_pools(catalog);
    let prefs = PreferenceSet::new(cfg.solver.preferences)?;
    let schedule = LrSchedule { peak: cfg.learning_rate, floor: cfg.lr_floor, warmup: cfg.warmup_steps, total: cfg.max_steps };
    let mut state = EncoderState::new(model.clone())?;
    let mut opt = AdamW::new(&state.params, cfg.weight_decay);

    let mut out = TrainOutcome {
        config: cfg.clone(),
        state: state.clone(),
        best_step: 0,
        best_validation: f64::NEG_INFINITY,
        steps: 0,
        stopped_early: false,
        log: Vec::with_capacity(cfg.max_steps),
        validation: Vec::new(),
        step_seconds: Vec::with_capacity(cfg.max_steps),
    };
    let check = |state: &EncoderState, step: usize, out: &mut TrainOutcome| -> Result<bool> {
        let (ndcg10, recall10) = validate(state, &cfg, &v.valid, data)?;
        let best = ndcg10 > out.best_validation;
        if best {
            out.best_validation = ndcg10;
            out.best_step = step;
            out.state = state.clone();
        }
        out.validation.push(ValidationRecord { step, ndcg10, recall10, best });
        Ok(step - out.best_step >= cfg.patience_steps)
    };

    let mut step = 0;
    let mut epoch = 0u64;
    'outer: while step < cfg.max_steps {
        let batches = make_batches(&view, &spec, cfg.seed, epoch);
        if batches.is_empty() {
            return Err(Error::EmptyTestView);
        }
        for b in batches {
            let started = Instant::now();
            step += 1;
            let prepared: Vec<Prepared> = b.examples.iter().map(|ex| prepare_example(&model, ex)).collect::<Result<_>>()?;
            let sb = stack(&prepared, space.pad());
            let negatives = match cfg.train_negatives {
                Some(n) => {
                    let doms: Vec<usize> =
                        sb.items.iter().map(|&i| catalog.domain_of(i).expect("catalog item")).collect();
                    let mut r = rng_for(cfg.seed, NEGATIVE_STREAM + step as u64);
                    Some(sample_negatives(&pools, &sb.items, &doms, n, &mut r)?)
                }
                None => None,
            };
            let (mut grads, mut record) =
                step_gradients(&state, &cfg, &prefs, &sb, negatives.as_deref()).map_err(|e| diverged(e, step, b.id))?;
            record.step = step;
            if !record.l_rec.is_finite() || !record.l_cd.is_finite() || grads.iter().any(|g| !g.all_finite()) {
                return Err(Error::Diverged { step, batch: b.id, rec: record.l_rec, cd: record.l_cd });
            }
            clip_global_norm(&mut grads, cfg.grad_clip);
            opt.step(&mut state.params, &grads, schedule.at(step));
            out.log.push(record);
            out.step_seconds.push(started.elapsed().as_secs_f64());
            if with_validation && step % cfg.validation_interval == 0 && check(&state, step, &mut out)? {
                out.stopped_early = true;
                break 'outer;
            }
            if step >= cfg.max_steps {
                break 'outer;
            }
        }
        epoch += 1;
    }
    out.steps = step;
    if with_validation {
        if out.validation.last().map(|r| r.step) != Some(step) {
            check(&state, step, &mut out)?;
        }
    } else {
        out.state = state;
        out.best_step = step;
    }
    Ok(out)
}

/// Test-set ranks of a cross-domain outcome or of a set of single-domain
/// outcomes covering every domain.
pub fn test_outcomes(models: &[&TrainOutcome], data: &Dataset, holdout: Holdout) -> Result<(ModelScorer, Vec<Outcome>)> {
    let first = models.first().ok_or_else(|| Error::Coverage("no models".into()))?;
    let scorer = if models.len() == 1 && !matches!(first.config.method, Method::SingleDomain { .. }) {
        first.scorer()
    } else {
        let mut per = Vec::new();
        for m in models {
            match m.config.method {
                Method::SingleDomain { domain } => per.push((domain, m.state.clone())),
                other => return Err(Error::Coverage(format!("{} mixed with single-domain models", other.label()))),
            }
        }
        ModelScorer::single_domain("single-domain", per)
    };
    let split = leave_one_out(&data.sequences);
    let covered: Vec<usize> = match first.config.method {
        Method::SingleDomain { .. } => models
            .iter()
            .filter_map(|m| match m.config.method {
                Method::SingleDomain { domain } => Some(domain),
                _ => None,
            })
            .collect(),
        _ => (0..data.catalog.num_domains()).collect(),
    };
    let targets: Vec<Target<'_>> =
        split.targets(holdout).into_iter().filter(|t| covered.contains(&t.target.domain)).collect();
    let outcomes = rank_targets(&scorer, &targets, &data.catalog, &first.config.eval)?;
    Ok((scorer, outcomes))
}

/// Test-set report of a cross-domain model or of per-domain single-domain models.
pub fn test_report(models: &[&TrainOutcome], data: &Dataset) -> Result<EvalReport> {
    let (scorer, outcomes) = test_outcomes(models, data, Holdout::Test)?;
    use crate::eval::Scorer;
    Ok(summarize(&scorer.name(), &outcomes, &data.catalog, &models[0].config.eval))
}

/// Trains one model per domain with `method = single-domain`.
pub fn train_single_domain_models(cfg: &TrainConfig, data: &Dataset) -> Result<Vec<TrainOutcome>> {
    (0..data.catalog.num_domains())
        .map(|domain| train(&TrainConfig { method: Method::SingleDomain { domain }, ..cfg.clone() }, data))
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha_rec: f64,
    pub alpha_cd: f64,
    pub best_step: usize,
    pub best_validation: f64,
    pub report: EvalReport,
}

/// One static-weight model per grid point, each evaluated on the test targets.
pub fn sweep_static_weights(cfg: &TrainConfig, data: &Dataset, grid: &[(f64, f64)]) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::config("grid", "empty weight grid"));
    }
    grid.iter()
        .map(|&(alpha_rec, alpha_cd)| {
            let c = TrainConfig { method: Method::StaticWeight { alpha_rec, alpha_cd }, ..cfg.clone() };
            let o = train(&c, data)?;
            let report = test_report(&[&o], data)?;
            Ok(SweepPoint { alpha_rec, alpha_cd, best_step: o.best_step, best_validation: o.best_validation, report })
        })
        .collect()
}
