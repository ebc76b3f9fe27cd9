use thiserror::Error;

use crate::model::ModelError;

/// Failures shared by the inference engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("evidence has zero probability under the model")]
    InconsistentEvidence,
    #[error("problem too large: {what} needs {needed} entries, limit {limit}")]
    Capacity { what: &'static str, needed: u128, limit: u128 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
