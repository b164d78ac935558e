//! Time-windowed influence of single training samples.
//!
//! For a window `[t1, t2]` and a query `q(t)` the tracked quantity is
//! `Q = <q(t2), d[t2]> - <q(t1), d[t1]>` where `d[t]` is the linearised
//! parameter deviation caused by dropping sample `j` from every batch.
//! [`compute_influence`] evaluates it with one backward sweep that carries
//! `q(t2)` and `q(t1)` through `Z_t = I - lr_t H[t]`; the dense forward
//! products in [`estimate_param_change_dense`] serve as an independent check.

mod bound;
mod estimator;
mod query;
mod sweep;

use alloc::string::String;

pub use bound::{error_bound, estimate_constants, BoundConstants};
pub use estimator::{estimate_param_change, estimate_param_change_dense};
pub use query::{eval_query, QuerySpec};
pub use sweep::{
    compute_influence, compute_influence_all, compute_influence_ckpt, compute_influence_ckpt_all, StepSource,
};

use crate::{Error, Result};

/// Training interval `[t1, t2]` with `t1 < t2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeWindow {
    pub t1: usize,
    pub t2: usize,
}

impl TimeWindow {
    pub fn new(t1: usize, t2: usize, steps: usize) -> Result<Self> {
        if t1 >= t2 || t2 > steps {
            return Err(Error::InvalidWindow { t1, t2, steps });
        }
        Ok(Self { t1, t2 })
    }

    /// `[0, steps]`.
    pub fn full(steps: usize) -> Result<Self> {
        Self::new(0, steps, steps)
    }

    /// Window of epoch `e`: `[e E, min((e+1) E, T)]`.
    pub fn epoch(e: usize, steps_per_epoch: usize, steps: usize) -> Result<Self> {
        Self::new(e * steps_per_epoch, ((e + 1) * steps_per_epoch).min(steps), steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceRecord {
    pub j: usize,
    pub window: TimeWindow,
    pub query: String,
    pub value: f64,
}
