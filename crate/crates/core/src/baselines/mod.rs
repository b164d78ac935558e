//! Reference estimators: leave-one-out retraining and the classical
//! influence function.

mod influence_function;
mod loo;

pub use influence_function::{default_damping, if_influence, IfEstimator, IfResult};
pub use loo::{loo_epoch_series, loo_influence, LooHarness, LooMode, LooResult};

#[cfg(test)]
mod tests;
