//! Second-order inference on Bayesian networks whose conditional tables are
//! Dirichlet-distributed.
//!
//! [`solbp`] propagates means and covariances through loopy belief
//! propagation; [`spn`] computes the same quantities through a compiled
//! arithmetic circuit; [`exact`] provides enumeration and Monte Carlo
//! references; [`eval`] scores calibration of the resulting intervals.

pub mod bp;
pub mod error;
pub mod eval;
pub mod exact;
pub mod ingest;
pub mod model;
pub mod rng;
pub mod solbp;
pub mod spn;

pub use error::InferenceError;
pub use model::{
    ConcreteNetwork, Evidence, MarginalEstimate, MessageStats, ModelError, NetworkStructure, UncertainNetwork,
    Variable,
};
