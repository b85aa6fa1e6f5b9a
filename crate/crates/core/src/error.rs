use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("row {0} is fully masked")]
    FullyMaskedRow(usize),
    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("token id {id} outside vocabulary of size {size}")]
    OutOfVocabulary { id: usize, size: usize },
    #[error("empty candidate set")]
    EmptyCandidates,
    #[error("masked readout requested but no position is masked")]
    NoMaskedPosition,
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("all task gradients are zero")]
    ZeroGradients,
    #[error("empty gradient set")]
    EmptyGradientSet,
    #[error("parameter scope selects nothing")]
    EmptyScope,
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("empty domain block for domain {0}")]
    EmptyDomainBlock(usize),
    #[error("empty test view")]
    EmptyTestView,
    #[error("target {0} missing from candidate list")]
    TargetNotInCandidates(usize),
    #[error("coverage mismatch: {0}")]
    Coverage(String),
    #[error("missing logs: {0}")]
    MissingLogs(String),
    #[error("too few steps: {0}")]
    TooFewSteps(String),
    #[error("non-finite training loss at step {step} (batch {batch}): rec={rec} cd={cd}")]
    Diverged { step: usize, batch: usize, rec: f64, cd: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }
}
