//! Policy mirror descent lab: regularized off-policy actor-critic on small control tasks,
//! with hyperparameter sweeps and robustness metrics.

pub mod agent;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod neural;
pub mod regularizers;

pub use error::{Error, Result};
