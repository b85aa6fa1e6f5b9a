//! Synthetic multi-domain behaviour with a known generating process.
//!
//! Each domain's catalog is split into equally sized interest clusters with a
//! Zipf popularity profile inside every cluster. A hidden interest state walks
//! over clusters through a peaked transition table; the scenario decides how
//! the domains share that walk.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::catalog::{Catalog, Dataset, Event, InteractionSequence};
use crate::error::{Error, Result};
use crate::numerics::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// One interest walk drives every domain; the latest item of any domain
    /// tells where the walk is.
    Complementary,
    /// Every domain walks its own chain, advancing only on its own items.
    Independent,
    /// Domain 0 walks its chain; all other domains emit uniform noise.
    Contradictory,
    /// Each user is complementary or contradictory.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub scenario: Scenario,
    pub users: usize,
    pub domains: usize,
    pub items_per_domain: usize,
    pub clusters: usize,
    pub mean_length: usize,
    /// Probability that an interaction falls in domain 0; the rest is spread
    /// evenly over the other domains.
    pub domain_mix: f64,
    /// Share of complementary users in the mixed scenario.
    pub complementary_share: f64,
    /// Probability mass of the preferred successor cluster.
    pub transition_peak: f64,
    pub zipf_exponent: f64,
    /// Probability of replacing an emitted item by a uniform item of its domain.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Complementary,
            users: 2000,
            domains: 2,
            items_per_domain: 1000,
            clusters: 20,
            mean_length: 20,
            domain_mix: 0.5,
            complementary_share: 0.5,
            transition_peak: 0.9,
            zipf_exponent: 1.0,
            noise_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("data.{name}"), "must lie in [0, 1]"))
            }
        };
        unit("domain_mix", self.domain_mix)?;
        unit("complementary_share", self.complementary_share)?;
        unit("transition_peak", self.transition_peak)?;
        unit("noise_rate", self.noise_rate)?;
        if self.domains < 1 {
            return Err(Error::config("data.domains", "must be positive"));
        }
        if self.clusters == 0 || self.items_per_domain % self.clusters != 0 {
            return Err(Error::config("data.clusters", "must divide items_per_domain"));
        }
        if self.mean_length < 3 {
            return Err(Error::config("data.mean_length", "must be at least 3"));
        }
        if self.domains < 2 && matches!(self.scenario, Scenario::Contradictory | Scenario::Mixed) {
            return Err(Error::config("data.domains", "scenario needs at least two domains"));
        }
        Ok(())
    }
}

/// Parameters and latent draws of a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: Scenario,
    pub clusters: usize,
    pub cluster_size: usize,
    /// Emission weights within a cluster, by rank (sums to 1).
    pub emission: Vec<f64>,
    /// Transition tables (`clusters × clusters`): one per domain for
    /// `independent`, a single shared one otherwise.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// Per user: scenario actually used (differs only in `mixed`).
    pub user_scenarios: Vec<Scenario>,
    /// Per user and event: hidden cluster the item was emitted from, `None`
    /// for noise items.
    pub hidden_states: Vec<Vec<Option<usize>>>,
}

impl GroundTruth {
    /// Cluster of item `item` (global id) within its domain.
    pub fn cluster_of(&self, item: usize) -> usize {
        (item % (self.clusters * self.cluster_size)) / self.cluster_size
    }

    /// Probability of `next` given the state that emitted `prev`, for a domain
    /// walking `table`.
    pub fn item_probability(&self, table: usize, prev_cluster: usize, next: usize) -> f64 {
        let c = self.cluster_of(next);
        let rank = next % self.cluster_size;
        self.transitions[table][prev_cluster][c] * self.emission[rank]
    }
}

fn transition_table(r: &mut impl Rng, z: usize, peak: f64) -> Vec<Vec<f64>> {
    let mut succ: Vec<usize> = (0..z).collect();
    succ.shuffle(r);
    (0..z)
        .map(|c| {
            let mut row = vec![(1.0 - peak) / z as f64; z];
            row[succ[c]] += peak;
            row
        })
        .collect()
}

pub fn synthesize(cfg: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let mut r = rng(cfg.seed);
    let z = cfg.clusters;
    let size = cfg.items_per_domain / z;
    let names = (0..cfg.domains).map(|d| d.to_string()).collect();
    let catalog = Catalog::contiguous(names, &vec![cfg.items_per_domain; cfg.domains])?;

    let raw: Vec<f64> = (0..size).map(|k| 1.0 / ((k + 1) as f64).powf(cfg.zipf_exponent)).collect();
    let total: f64 = raw.iter().sum();
    let emission: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let emit = WeightedIndex::new(&emission).expect("positive weights");
    let chains = if cfg.scenario == Scenario::Independent { cfg.domains } else { 1 };
    let transitions: Vec<Vec<Vec<f64>>> = (0..chains).map(|_| transition_table(&mut r, z, cfg.transition_peak)).collect();
    let steppers: Vec<Vec<WeightedIndex<f64>>> = transitions
        .iter()
        .map(|t| t.iter().map(|row| WeightedIndex::new(row).expect("positive row")).collect())
        .collect();

    let mut domain_weights = vec![(1.0 - cfg.domain_mix) / (cfg.domains.max(2) - 1) as f64; cfg.domains];
    domain_weights[0] = if cfg.domains == 1 { 1.0 } else { cfg.domain_mix };
    let pick_domain = WeightedIndex::new(&domain_weights).map_err(|_| Error::config("data.domain_mix", "leaves no domain"))?;

    let lo = (cfg.mean_length / 2).max(3);
    let hi = cfg.mean_length + (cfg.mean_length - lo);
    let mut sequences = Vec::with_capacity(cfg.users);
    let mut user_scenarios = Vec::with_capacity(cfg.users);
    let mut hidden_states = Vec::with_capacity(cfg.users);
    let width = cfg.users.to_string().len();
    for u in 0..cfg.users {
        let scenario = match cfg.scenario {
            Scenario::Mixed => {
                if r.gen_bool(cfg.complementary_share) {
                    Scenario::Complementary
                } else {
                    Scenario::Contradictory
                }
            }
            s => s,
        };
        let len = r.gen_range(lo..=hi);
        let mut state: Vec<usize> = (0..chains).map(|_| r.gen_range(0..z)).collect();
        let mut events = Vec::with_capacity(len);
        let mut hidden = Vec::with_capacity(len);
        for t in 0..len {
            let d = pick_domain.sample(&mut r);
            let chain = if scenario == Scenario::Independent { d } else { 0 };
            let emits = match scenario {
                Scenario::Contradictory => d == 0,
                _ => true,
            };
            let base = d * cfg.items_per_domain;
            let (mut item, mut h) = if emits {
                let c = state[chain];
                (base + c * size + emit.sample(&mut r), Some(c))
            } else {
                (base + r.gen_range(0..cfg.items_per_domain), None)
            };
            if cfg.noise_rate > 0.0 && r.gen_bool(cfg.noise_rate) {
                item = base + r.gen_range(0..cfg.items_per_domain);
                h = None;
            }
            if emits {
                state[chain] = steppers[chain][state[chain]].sample(&mut r);
            }
            events.push(Event { item, domain: d, timestamp: t as i64 });
            hidden.push(h);
        }
        sequences.push(InteractionSequence { user: format!("u{u:0width$}"), events });
        user_scenarios.push(scenario);
        hidden_states.push(hidden);
    }
    let truth = GroundTruth {
        scenario: cfg.scenario,
        clusters: z,
        cluster_size: size,
        emission,
        transitions,
        user_scenarios,
        hidden_states,
    };
    Ok((Dataset { catalog, sequences }, truth))
}
