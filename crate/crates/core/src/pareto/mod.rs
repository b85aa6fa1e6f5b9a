//! Multi-objective step weighting: min-norm solutions, preference regions
//! and the reconciliation of the two training losses.

mod min_norm;
mod preference;
mod reconcile;

pub use min_norm::{frank_wolfe_gram, gram_matrix, min_norm_two, min_norm_two_gram, FrankWolfeResult};
pub use preference::{active_constraints, preference_vectors, PreferenceSet};
pub use reconcile::{
    flatten_gradients, read_step_log, reconcile, scoped_gram, write_step_log, ParamScope, Reconciled, SolverConfig,
    StepRecord,
};

use crate::error::Result;

/// Task gradients over one fixed parameter subset.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub labels: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl GradientBundle {
    pub fn new(vectors: Vec<Vec<f64>>) -> Self {
        let labels = (0..vectors.len()).map(|i| format!("task{i}")).collect();
        Self { labels, vectors }
    }

    pub fn gram(&self) -> Result<Vec<Vec<f64>>> {
        gram_matrix(&self.vectors)
    }
}

/// Simplex weights approximately minimizing `‖Σ β_k g_k‖`.
pub fn frank_wolfe_min_norm(bundle: &GradientBundle, cfg: &SolverConfig) -> Result<FrankWolfeResult> {
    cfg.validate()?;
    if bundle.vectors.is_empty() {
        return Err(crate::Error::EmptyGradientSet);
    }
    frank_wolfe_gram(&bundle.gram()?, cfg.max_iterations, cfg.tolerance)
}
