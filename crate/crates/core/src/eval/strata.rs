use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::evaluate::Outcome;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stratum {
    BothCorrect,
    SingleOnly,
    CrossOnly,
    BothWrong,
}

impl Stratum {
    pub const ALL: [Stratum; 4] = [Stratum::BothCorrect, Stratum::SingleOnly, Stratum::CrossOnly, Stratum::BothWrong];

    pub fn of(single_correct: bool, cross_correct: bool) -> Self {
        match (single_correct, cross_correct) {
            (true, true) => Stratum::BothCorrect,
            (true, false) => Stratum::SingleOnly,
            (false, true) => Stratum::CrossOnly,
            (false, false) => Stratum::BothWrong,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Stratum::BothCorrect => "both-correct",
            Stratum::SingleOnly => "single-only",
            Stratum::CrossOnly => "cross-only",
            Stratum::BothWrong => "both-wrong",
        }
    }
}

/// Attention mass of one user's sequence, averaged over layers and heads.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionStats {
    pub cross: f64,
    pub single: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub stratum: Stratum,
    pub users: usize,
    pub mean_cross: f64,
    pub sd_cross: f64,
    pub mean_single: f64,
    pub sd_single: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrataTable {
    pub k: usize,
    pub rows: Vec<StratumRow>,
    pub assignment: Vec<(usize, Stratum)>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

impl StrataTable {
    /// Splits users by top-`k` correctness of a single-domain and a
    /// cross-domain model. `single` may hold outcomes of several per-domain
    /// models; every user must appear exactly once in each input.
    pub fn build(single: &[Outcome], cross: &[Outcome], attention: &[(usize, AttentionStats)], k: usize) -> Result<Self> {
        fn index<V: Copy>(what: &str, xs: impl Iterator<Item = (usize, V)>) -> Result<BTreeMap<usize, V>> {
            let mut m = BTreeMap::new();
            for (u, v) in xs {
                if m.insert(u, v).is_some() {
                    return Err(Error::Coverage(format!("user {u} appears twice in {what}")));
                }
            }
            Ok(m)
        }
        if k == 0 {
            return Err(Error::config("strata.k", "must be positive"));
        }
        let s = index("single-domain outcomes", single.iter().map(|o| (o.user, o.rank)))?;
        let c = index("cross-domain outcomes", cross.iter().map(|o| (o.user, o.rank)))?;
        let a = index("attention stats", attention.iter().copied())?;
        if !s.keys().eq(c.keys()) || !s.keys().eq(a.keys()) {
            return Err(Error::Coverage(format!(
                "{} single-domain, {} cross-domain and {} attention users do not match",
                s.len(),
                c.len(),
                a.len()
            )));
        }
        let assignment: Vec<(usize, Stratum)> = s.iter().map(|(&u, &r)| (u, Stratum::of(r <= k, c[&u] <= k))).collect();
        let rows = Stratum::ALL
            .iter()
            .map(|&st| {
                let users: Vec<usize> = assignment.iter().filter(|x| x.1 == st).map(|x| x.0).collect();
                let (mean_cross, sd_cross) = mean_sd(&users.iter().map(|u| a[u].cross).collect::<Vec<_>>());
                let (mean_single, sd_single) = mean_sd(&users.iter().map(|u| a[u].single).collect::<Vec<_>>());
                StratumRow { stratum: st, users: users.len(), mean_cross, sd_cross, mean_single, sd_single }
            })
            .collect();
        Ok(Self { k, rows, assignment })
    }

    pub fn row(&self, s: Stratum) -> &StratumRow {
        self.rows.iter().find(|r| r.stratum == s).expect("all strata present")
    }

    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.users).sum()
    }

    /// Long format: `stratum,statistic,value`.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stratum", "statistic", "value"])?;
        for r in &self.rows {
            for (name, v) in [
                ("users", r.users as f64),
                ("mean_cross", r.mean_cross),
                ("sd_cross", r.sd_cross),
                ("mean_single", r.mean_single),
                ("sd_single", r.sd_single),
            ] {
                w.write_record([r.stratum.label(), name, &v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
