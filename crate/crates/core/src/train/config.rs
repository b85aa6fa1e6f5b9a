use serde::{Deserialize, Serialize};

use crate::crossdomain::CdLossConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::model::ModelConfig;
use crate::pareto::SolverConfig;

/// How the two losses are combined during training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Method {
    /// Trained and evaluated on one domain's interactions only.
    SingleDomain { domain: usize },
    NaiveCrossDomain,
    StaticWeight { alpha_rec: f64, alpha_cd: f64 },
    Autocdsr,
    /// Bottleneck-token layout with Pareto reconciliation.
    AutocdsrPlus,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::SingleDomain { domain } => format!("single-domain-{domain}"),
            Method::NaiveCrossDomain => "naive-cross-domain".into(),
            Method::StaticWeight { alpha_rec, alpha_cd } => format!("static-{alpha_rec}-{alpha_cd}"),
            Method::Autocdsr => "autocdsr".into(),
            Method::AutocdsrPlus => "autocdsr-plus".into(),
        }
    }

    pub fn reconciles(&self) -> bool {
        matches!(self, Method::Autocdsr | Method::AutocdsrPlus)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    /// `vocab_size` and `num_domains` of 0 are filled from the dataset.
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    /// Step budget; the cosine schedule reaches `lr_floor` here.
    pub max_steps: usize,
    pub lr_floor: f64,
    pub batch_size: usize,
    pub patience_steps: usize,
    pub validation_interval: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Seeds model initialisation, batching and training negatives.
    pub seed: u64,
    /// Sampled negatives per training target, drawn from the target's
    /// domain; `None` scores the whole catalog.
    pub train_negatives: Option<usize>,
    /// Fraction of training events whose domain label is reassigned.
    pub corruption_rate: f64,
    pub solver: SolverConfig,
    pub cd_loss: CdLossConfig,
    /// Penalise pre-softmax scores instead of attention probabilities.
    pub cd_on_raw_scores: bool,
    /// Validation and test protocol.
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Autocdsr,
            model: ModelConfig::default(),
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            warmup_steps: 1000,
            max_steps: 20_000,
            lr_floor: 0.0,
            batch_size: 128,
            patience_steps: 2000,
            validation_interval: 500,
            grad_clip: 5.0,
            seed: 0,
            train_negatives: None,
            corruption_rate: 0.0,
            solver: SolverConfig::default(),
            cd_loss: CdLossConfig::default(),
            cd_on_raw_scores: false,
            eval: EvalConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(0.0..=self.learning_rate).contains(&self.lr_floor) {
            return Err(Error::config("lr_floor", "must lie in [0, learning_rate]"));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps", "must be positive"));
        }
        if self.validation_interval == 0 {
            return Err(Error::config("validation_interval", "must be positive"));
        }
        if self.patience_steps % self.validation_interval != 0 {
            return Err(Error::config("patience_steps", "must be a multiple of validation_interval"));
        }
        if self.grad_clip < 0.0 {
            return Err(Error::config("grad_clip", "must be non-negative"));
        }
        if self.train_negatives == Some(0) {
            return Err(Error::config("train_negatives", "must be positive when set"));
        }
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(Error::config("corruption_rate", "must lie in [0, 1]"));
        }
        if let Method::StaticWeight { alpha_rec, alpha_cd } = self.method {
            if alpha_rec < 0.0 || alpha_cd < 0.0 || (alpha_rec + alpha_cd - 1.0).abs() > 1e-9 {
                return Err(Error::config("method.alpha_rec", "static weights must be non-negative and sum to 1"));
            }
        }
        if self.method == Method::AutocdsrPlus && self.model.ib_tokens == 0 {
            return Err(Error::config("model.ib_tokens", "autocdsr-plus needs at least one bottleneck token"));
        }
        if self.method != Method::AutocdsrPlus && self.model.ib_tokens > 0 {
            return Err(Error::config("model.ib_tokens", "bottleneck tokens are only used by autocdsr-plus"));
        }
        // vocabulary and domain counts come from the data and are checked at training time
        let shape = ModelConfig {
            vocab_size: self.model.vocab_size.max(1),
            num_domains: self.model.num_domains.max(1),
            ..self.model.clone()
        };
        shape.validate()?;
        self.solver.validate()?;
        self.eval.validate()?;
        Ok(())
    }

    /// Model config with dataset-dependent sizes filled in and the training seed applied.
    pub fn resolved_model(&self, items: usize, domains: usize) -> Result<ModelConfig> {
        let mut m = self.model.clone();
        if m.vocab_size == 0 {
            m.vocab_size = items;
        }
        if m.num_domains == 0 {
            m.num_domains = domains;
        }
        if m.vocab_size != items {
            return Err(Error::config("model.vocab_size", format!("dataset has {items} items")));
        }
        if m.num_domains < domains {
            return Err(Error::config("model.num_domains", format!("dataset has {domains} domains")));
        }
        m.init_seed = self.seed;
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn patience_multiple_of_interval() {
        let c = TrainConfig { patience_steps: 750, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "patience_steps"));
    }

    #[test]
    fn method_round_trips_through_json() {
        for m in [
            Method::SingleDomain { domain: 1 },
            Method::NaiveCrossDomain,
            Method::StaticWeight { alpha_rec: 0.9, alpha_cd: 0.1 },
            Method::Autocdsr,
            Method::AutocdsrPlus,
        ] {
            let s = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<Method>(&s).unwrap(), m);
        }
    }

    #[test]
    fn static_weights_on_simplex() {
        let c = TrainConfig { method: Method::StaticWeight { alpha_rec: 0.5, alpha_cd: 0.6 }, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
