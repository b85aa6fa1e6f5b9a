use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit vectors `p_k = (cos(kπ/2K), sin(kπ/2K))`, `k = 0..=K`, splitting the
/// positive quadrant of the (recommendation, cross-domain) loss plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSet {
    pub vectors: Vec<[f64; 2]>,
    /// Index of the preferred region.
    pub chosen: usize,
}

impl PreferenceSet {
    pub fn new(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::config("solver.preferences", "must be at least 1"));
        }
        let vectors = (0..=k)
            .map(|i| {
                let a = i as f64 * FRAC_PI_2 / k as f64;
                [a.cos(), a.sin()]
            })
            .collect();
        Ok(Self { vectors, chosen: 1 })
    }

    pub fn regions(&self) -> usize {
        self.vectors.len() - 1
    }

    pub fn chosen_vector(&self) -> [f64; 2] {
        self.vectors[self.chosen]
    }

    /// `(p_k - p_chosen)`: coefficients of constraint `k` on the two losses.
    pub fn constraint(&self, k: usize) -> [f64; 2] {
        let p = self.vectors[k];
        let c = self.chosen_vector();
        [p[0] - c[0], p[1] - c[1]]
    }
}

pub fn preference_vectors(k: usize) -> Result<PreferenceSet> {
    PreferenceSet::new(k)
}

/// Indices `k != chosen` with `(p_k - p_chosen)ᵀ L > 0`.
pub fn active_constraints(losses: [f64; 2], prefs: &PreferenceSet) -> Vec<usize> {
    (0..prefs.vectors.len())
        .filter(|&k| k != prefs.chosen)
        .filter(|&k| {
            let c = prefs.constraint(k);
            c[0] * losses[0] + c[1] * losses[1] > 0.0
        })
        .collect()
}
