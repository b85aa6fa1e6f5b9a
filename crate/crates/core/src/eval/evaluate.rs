use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{ndcg_from_rank, rank_by_score, recall_from_rank};
use crate::data::{Catalog, Event, Target};
use crate::error::{Error, Result};
use crate::numerics::rng_for;

/// One ranking request.
#[derive(Clone, Copy, Debug)]
pub struct Query<'a> {
    pub user: usize,
    pub history: &'a [Event],
    /// Domain of the held-out item.
    pub domain: usize,
    pub candidates: &'a [usize],
}

/// Anything that scores candidate items for a user history (higher is better).
/// Scores candidate lists. Implementations are shared across evaluation threads.
pub trait Scorer: Sync {
    fn name(&self) -> String;
    fn score_batch(&self, queries: &[Query<'_>]) -> Result<Vec<Vec<f64>>>;
}

/// Where sampled negatives come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NegativePool {
    /// Items of the target's domain.
    #[default]
    Domain,
    /// The whole catalog.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub negatives: usize,
    pub ks: Vec<usize>,
    pub seed: u64,
    pub pool: NegativePool,
    /// Queries scored per call to the scorer.
    pub chunk: usize,
    /// Worker threads; results do not depend on it. Not part of saved configs.
    #[serde(skip)]
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { negatives: 99, ks: vec![1, 5, 10, 20], seed: 0, pool: NegativePool::Domain, chunk: 256, threads: 1 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negatives < 1 {
            return Err(Error::config("eval.negatives", "must be at least 1"));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::config("eval.ks", "needs positive cutoffs"));
        }
        if self.threads == 0 {
            return Err(Error::config("eval.threads", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub domain: Option<usize>,
    pub name: String,
    pub targets: usize,
    /// Aligned with the report's `ks`.
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub seed: u64,
    pub negatives: usize,
    pub ks: Vec<usize>,
    pub per_domain: Vec<MetricRow>,
    pub overall: MetricRow,
}

impl EvalReport {
    fn k_index(&self, k: usize) -> Option<usize> {
        self.ks.iter().position(|&x| x == k)
    }

    /// Unweighted mean of per-domain Recall@k.
    pub fn macro_recall(&self, k: usize) -> f64 {
        let i = self.k_index(k).expect("cutoff evaluated");
        self.per_domain.iter().map(|r| r.recall[i]).sum::<f64>() / self.per_domain.len() as f64
    }

    pub fn macro_ndcg(&self, k: usize) -> f64 {
        let i = self.k_index(k).expect("cutoff evaluated");
        self.per_domain.iter().map(|r| r.ndcg[i]).sum::<f64>() / self.per_domain.len() as f64
    }

    pub fn domain_recall(&self, domain: usize, k: usize) -> Option<f64> {
        let i = self.k_index(k)?;
        self.per_domain.iter().find(|r| r.domain == Some(domain)).map(|r| r.recall[i])
    }

    /// Long-format rows: `model,domain,metric,k,value,targets`.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "domain", "metric", "k", "value", "targets"])?;
        for row in self.per_domain.iter().chain(std::iter::once(&self.overall)) {
            for (i, k) in self.ks.iter().enumerate() {
                for (metric, v) in [("recall", row.recall[i]), ("ndcg", row.ndcg[i])] {
                    w.write_record([
                        self.model.clone(),
                        row.name.clone(),
                        metric.to_string(),
                        k.to_string(),
                        v.to_string(),
                        row.targets.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Rank of every evaluated target, in target order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub user: usize,
    pub domain: usize,
    pub rank: usize,
}

/// Candidate list of one target: target first, then `n` distinct negatives,
/// drawn from a stream keyed by `(seed, user)` so every model sees the same.
pub fn sample_candidates(catalog: &Catalog, target: &Event, user: usize, cfg: &EvalConfig) -> Result<Vec<usize>> {
    let pool: Vec<usize> = match cfg.pool {
        NegativePool::Domain => catalog.items_of(target.domain),
        NegativePool::Global => (0..catalog.num_items()).collect(),
    };
    let others: Vec<usize> = pool.into_iter().filter(|&i| i != target.item).collect();
    if others.len() < cfg.negatives {
        return Err(Error::config(
            "eval.negatives",
            format!("{} requested but only {} items available", cfg.negatives, others.len()),
        ));
    }
    let mut r = rng_for(cfg.seed, user as u64);
    let mut out = Vec::with_capacity(cfg.negatives + 1);
    out.push(target.item);
    if cfg.negatives == others.len() {
        out.extend(others);
    } else {
        out.extend(index::sample(&mut r, others.len(), cfg.negatives).into_iter().map(|i| others[i]));
    }
    Ok(out)
}

fn rank_chunk(scorer: &dyn Scorer, ts: &[Target<'_>], cs: &[Vec<usize>]) -> Result<Vec<Outcome>> {
    let queries: Vec<Query<'_>> = ts
        .iter()
        .zip(cs)
        .map(|(t, c)| Query { user: t.user, history: t.history, domain: t.target.domain, candidates: c })
        .collect();
    let scores = scorer.score_batch(&queries)?;
    if scores.len() != queries.len() {
        return Err(Error::Shape("scorer returned wrong number of score lists".into()));
    }
    ts.iter()
        .zip(cs)
        .zip(&scores)
        .map(|((t, c), s)| {
            if s.len() != c.len() || s.iter().any(|x| x.is_nan()) {
                return Err(Error::Shape(format!("bad scores for user {}", t.user)));
            }
            Ok(Outcome { user: t.user, domain: t.target.domain, rank: rank_by_score(c, s, 0) })
        })
        .collect()
}

/// Per-target ranks against sampled negatives, in target order.
pub fn rank_targets(scorer: &dyn Scorer, targets: &[Target<'_>], catalog: &Catalog, cfg: &EvalConfig) -> Result<Vec<Outcome>> {
    cfg.validate()?;
    if targets.is_empty() {
        return Err(Error::EmptyTestView);
    }
    let candidates: Vec<Vec<usize>> =
        targets.iter().map(|t| sample_candidates(catalog, &t.target, t.user, cfg)).collect::<Result<_>>()?;
    let chunk = cfg.chunk.max(1);
    let jobs: Vec<(&[Target<'_>], &[Vec<usize>])> = targets.chunks(chunk).zip(candidates.chunks(chunk)).collect();
    let threads = cfg.threads.min(jobs.len()).max(1);
    let parts: Vec<Result<Vec<Outcome>>> = if threads == 1 {
        jobs.iter().map(|(ts, cs)| rank_chunk(scorer, ts, cs)).collect()
    } else {
        // worker w takes jobs w, w + threads, ...; results are put back in job order
        let per_worker: Vec<Vec<(usize, Result<Vec<Outcome>>)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let jobs = &jobs;
                    s.spawn(move || {
                        (w..jobs.len()).step_by(threads).map(|j| (j, rank_chunk(scorer, jobs[j].0, jobs[j].1))).collect()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
        });
        let mut slots: Vec<Option<Result<Vec<Outcome>>>> = (0..jobs.len()).map(|_| None).collect();
        for (j, r) in per_worker.into_iter().flatten() {
            slots[j] = Some(r);
        }
        slots.into_iter().map(|r| r.expect("every job ran")).collect()
    };
    let mut out = Vec::with_capacity(targets.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn summarize(model: &str, outcomes: &[Outcome], catalog: &Catalog, cfg: &EvalConfig) -> EvalReport {
    let row = |domain: Option<usize>, name: String, sel: Vec<&Outcome>| {
        let n = sel.len().max(1) as f64;
        MetricRow {
            domain,
            name,
            targets: sel.len(),
            recall: cfg.ks.iter().map(|&k| sel.iter().map(|o| recall_from_rank(o.rank, k)).sum::<f64>() / n).collect(),
            ndcg: cfg.ks.iter().map(|&k| sel.iter().map(|o| ndcg_from_rank(o.rank, k)).sum::<f64>() / n).collect(),
        }
    };
    let per_domain = (0..catalog.num_domains())
        .filter_map(|d| {
            let sel: Vec<&Outcome> = outcomes.iter().filter(|o| o.domain == d).collect();
            (!sel.is_empty()).then(|| row(Some(d), catalog.domain_names[d].clone(), sel))
        })
        .collect();
    EvalReport {
        model: model.to_string(),
        seed: cfg.seed,
        negatives: cfg.negatives,
        ks: cfg.ks.clone(),
        per_domain,
        overall: row(None, "all".into(), outcomes.iter().collect()),
    }
}

pub fn evaluate(scorer: &dyn Scorer, targets: &[Target<'_>], catalog: &Catalog, cfg: &EvalConfig) -> Result<EvalReport> {
    let outcomes = rank_targets(scorer, targets, catalog, cfg)?;
    Ok(summarize(&scorer.name(), &outcomes, catalog, cfg))
}

/// Uniform random scores, drawn from a per-user stream.
pub struct RandomScorer {
    seed: u64,
}

impl RandomScorer {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl Scorer for RandomScorer {
    fn name(&self) -> String {
        "random".into()
    }

    fn score_batch(&self, queries: &[Query<'_>]) -> Result<Vec<Vec<f64>>> {
        Ok(queries
            .iter()
            .map(|q| {
                let mut r = rng_for(self.seed, q.user as u64);
                q.candidates.iter().map(|_| r.gen::<f64>()).collect()
            })
            .collect())
    }
}

/// Knows the answers: scores the held-out item of each user above everything.
pub struct OracleScorer {
    pub answers: std::collections::HashMap<usize, usize>,
}

impl OracleScorer {
    pub fn new(targets: &[Target<'_>]) -> Self {
        Self { answers: targets.iter().map(|t| (t.user, t.target.item)).collect() }
    }
}

impl Scorer for OracleScorer {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn score_batch(&self, queries: &[Query<'_>]) -> Result<Vec<Vec<f64>>> {
        Ok(queries
            .iter()
            .map(|q| {
                let a = self.answers.get(&q.user).copied();
                q.candidates.iter().map(|&c| if Some(c) == a { 1.0 } else { 0.0 }).collect()
            })
            .collect())
    }
}
