use rand::Rng;

use super::catalog::{Event, InteractionSequence};
use crate::numerics::rng;

/// Which held-out position a view targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Holdout {
    Valid,
    Test,
}

/// Leave-one-out views over borrowed sequences: the last event is the test
/// target, the one before it the validation target, the rest is training.
#[derive(Clone, Debug)]
pub struct LeaveOneOut<'a> {
    sequences: &'a [InteractionSequence],
    usable: Vec<usize>,
    pub skipped: usize,
}

/// One held-out prediction: everything before the target is history.
#[derive(Clone, Copy, Debug)]
pub struct Target<'a> {
    pub user: usize,
    pub history: &'a [Event],
    pub target: Event,
}

pub fn leave_one_out(sequences: &[InteractionSequence]) -> LeaveOneOut<'_> {
    let usable: Vec<usize> = (0..sequences.len()).filter(|&i| sequences[i].len() >= 3).collect();
    let skipped = sequences.len() - usable.len();
    LeaveOneOut { sequences, usable, skipped }
}

impl<'a> LeaveOneOut<'a> {
    pub fn users(&self) -> &[usize] {
        &self.usable
    }

    pub fn sequence(&self, user: usize) -> &'a InteractionSequence {
        &self.sequences[user]
    }

    pub fn train(&self, user: usize) -> &'a [Event] {
        let e = &self.sequences[user].events;
        &e[..e.len() - 2]
    }

    /// Training prefixes of every usable user.
    pub fn train_view(&self) -> Vec<&'a [Event]> {
        self.usable.iter().map(|&u| self.train(u)).collect()
    }

    pub fn target(&self, user: usize, which: Holdout) -> Target<'a> {
        let e = &self.sequences[user].events;
        let k = match which {
            Holdout::Valid => e.len() - 2,
            Holdout::Test => e.len() - 1,
        };
        Target { user, history: &e[..k], target: e[k] }
    }

    pub fn targets(&self, which: Holdout) -> Vec<Target<'a>> {
        self.usable.iter().map(|&u| self.target(u, which)).collect()
    }
}

/// Reassigns each event's domain, with probability `rate`, to a uniformly
/// chosen different domain. Items, order and timestamps are untouched.
pub fn corrupt_domains(sequences: &[InteractionSequence], domains: usize, rate: f64, seed: u64) -> Vec<InteractionSequence> {
    let mut r = rng(seed);
    sequences
        .iter()
        .map(|s| InteractionSequence {
            user: s.user.clone(),
            events: s
                .events
                .iter()
                .map(|e| {
                    let mut e = *e;
                    if domains > 1 && rate > 0.0 && r.gen_bool(rate.min(1.0)) {
                        let k = r.gen_range(0..domains - 1);
                        e.domain = if k >= e.domain { k + 1 } else { k };
                    }
                    e
                })
                .collect(),
        })
        .collect()
}
