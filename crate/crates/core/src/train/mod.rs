//! Optimizer, schedule and the training loop for every method.

mod config;
mod inputs;
mod optim;
mod scorer;
mod trainer;

pub use config::{Method, TrainConfig};
pub use inputs::{prepare, prepare_example, prepare_query, stack, Prepared, StackedBatch};
pub use optim::{clip_global_norm, global_norm, AdamW, LrSchedule};
pub use scorer::{attention_stats, ModelScorer};
pub use trainer::{
    sweep_static_weights, test_outcomes, test_report, train, train_single_domain_models, train_unvalidated,
    write_validation_log, SweepPoint, TrainOutcome, ValidationRecord,
};
