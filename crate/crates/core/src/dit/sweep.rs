//! Backward influence sweep.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{InfluenceRecord, QuerySpec, TimeWindow};
use crate::data::Dataset;
use crate::linalg::{all_finite, dot};
use crate::numkit::{self, Batch, ModelSpec, ParamVector};
use crate::trainer::{replay_segment, CheckpointStore, TrajectoryStore};
use crate::{Error, Result};

/// Per-step access to `theta[t]`, `S_t` and `lr_t`. The sweep requests
/// steps in non-increasing order.
pub trait StepSource {
    fn model(&self) -> &ModelSpec;
    fn steps(&self) -> usize;
    fn num_samples(&self) -> usize;
    fn params(&mut self, t: usize) -> Result<ParamVector>;
    fn batch(&self, t: usize) -> Result<&Batch>;
    fn lr(&self, t: usize) -> Result<f64>;
}

impl StepSource for &TrajectoryStore {
    fn model(&self) -> &ModelSpec {
        &self.model
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn num_samples(&self) -> usize {
        self.n
    }

    fn params(&mut self, t: usize) -> Result<ParamVector> {
        self.params_at(t).cloned()
    }

    fn batch(&self, t: usize) -> Result<&Batch> {
        self.record(t)
            .map(|r| &r.batch)
            .ok_or(Error::NotStored { step: t })
    }

    fn lr(&self, t: usize) -> Result<f64> {
        self.record(t).map(|r| r.lr).ok_or(Error::NotStored { step: t })
    }
}

/// Rebuilds parameters one checkpoint segment at a time, newest first, so
/// at most one segment of parameters is held in memory.
struct CheckpointSource<'a> {
    store: &'a CheckpointStore,
    dataset: &'a Dataset,
    cache: BTreeMap<usize, ParamVector>,
}

impl StepSource for CheckpointSource<'_> {
    fn model(&self) -> &ModelSpec {
        &self.store.model
    }

    fn steps(&self) -> usize {
        self.store.steps
    }

    fn num_samples(&self) -> usize {
        self.store.n
    }

    fn params(&mut self, t: usize) -> Result<ParamVector> {
        if let Some(p) = self.cache.get(&t) {
            return Ok(p.clone());
        }
        let start = self
            .store
            .checkpoint_at_or_before(t)
            .ok_or(Error::MissingCheckpoint { step: t })?;
        let end = self
            .store
            .checkpoints
            .range(t + 1..)
            .next()
            .map_or(self.store.steps, |(k, _)| *k)
            .max(t);
        self.cache = replay_segment(self.store, self.dataset, start, end)?;
        self.cache.get(&t).cloned().ok_or(Error::NotStored { step: t })
    }

    fn batch(&self, t: usize) -> Result<&Batch> {
        self.store.batches.get(t).ok_or(Error::NotStored { step: t })
    }

    fn lr(&self, t: usize) -> Result<f64> {
        self.store.lrs.get(t).copied().ok_or(Error::NotStored { step: t })
    }
}

enum Targets {
    One(usize),
    All(usize),
}

impl Targets {
    fn len(&self) -> usize {
        match self {
            Targets::One(_) => 1,
            Targets::All(n) => *n,
        }
    }

    fn slot(&self, i: usize) -> Option<usize> {
        match self {
            Targets::One(j) => (*j == i).then_some(0),
            Targets::All(_) => Some(i),
        }
    }
}

pub(super) fn query_at(q: &QuerySpec, model: &ModelSpec, theta: &[f64], t: usize) -> Result<Vec<f64>> {
    let v = q.at(model, theta)?.into_inner();
    if !all_finite(&v) {
        return Err(Error::NonFinite { step: t });
    }
    Ok(v)
}

/// The shared sweep. Iterates `t = t2-1 ..= 0`:
/// accumulate `lr_t/|S_t| <u2 - u1, g(z_j; theta[t])>` for targeted `j` in
/// `S_t`, apply `u <- u - lr_t H[t] u` to both carriers, and after the step
/// `t = t1` set `u1 <- q(t1)`. Until then `u1` is identically zero.
fn sweep<S: StepSource>(
    src: &mut S,
    dataset: &Dataset,
    q: &QuerySpec,
    window: TimeWindow,
    targets: Targets,
) -> Result<Vec<f64>> {
    let steps = src.steps();
    TimeWindow::new(window.t1, window.t2, steps)?;
    let n = src.num_samples();
    if dataset.len() != n {
        return Err(Error::DimensionMismatch {
            what: "dataset size",
            expected: n,
            got: dataset.len(),
        });
    }
    if let Targets::One(j) = targets {
        if j >= n {
            return Err(Error::IndexOutOfRange {
                what: "sample",
                index: j,
                len: n,
            });
        }
    }
    let model = src.model().clone();
    let samples = dataset.samples();
    let theta_end = src.params(window.t2)?;
    let mut u2 = query_at(q, &model, &theta_end, window.t2)?;
    let mut u1: Option<Vec<f64>> = None;
    let mut values = vec![0.0; targets.len()];

    for t in (0..window.t2).rev() {
        let theta = src.params(t)?;
        let lr = src.lr(t)?;
        let batch = src.batch(t)?;
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(&bad) = batch.indices().iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                what: "batch",
                index: bad,
                len: n,
            });
        }
        let scale = lr / batch.len() as f64;

        let mut diff: Option<Vec<f64>> = None;
        for &i in batch.indices() {
            let Some(slot) = targets.slot(i) else { continue };
            let carrier = match &u1 {
                None => &u2,
                Some(u1) => diff.get_or_insert_with(|| u2.iter().zip(u1).map(|(a, b)| a - b).collect()),
            };
            let g = numkit::grad(&model, &theta, &samples[i])?;
            values[slot] += scale * dot(carrier, &g);
        }

        let members = batch.indices().iter().map(|&i| &samples[i]);
        match &mut u1 {
            None => {
                let h = numkit::hvp_many(&model, &theta, members, &[&u2])?;
                for (u, hu) in u2.iter_mut().zip(&h[0]) {
                    *u -= lr * hu;
                }
            }
            Some(u1) => {
                let h = numkit::hvp_many(&model, &theta, members, &[&u2, u1])?;
                for (u, hu) in u2.iter_mut().zip(&h[0]) {
                    *u -= lr * hu;
                }
                for (u, hu) in u1.iter_mut().zip(&h[1]) {
                    *u -= lr * hu;
                }
            }
        }
        if t == window.t1 {
            u1 = Some(query_at(q, &model, &theta, t)?);
        }
        if !all_finite(&u2) || u1.as_deref().is_some_and(|u| !all_finite(u)) {
            return Err(Error::NonFinite { step: t });
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok(values)
}

fn records(values: Vec<f64>, offset: usize, q: &QuerySpec, window: TimeWindow) -> Vec<InfluenceRecord> {
    let id = q.id();
    values
        .into_iter()
        .enumerate()
        .map(|(k, value)| InfluenceRecord {
            j: offset + k,
            window,
            query: id.clone(),
            value,
        })
        .collect()
}

/// Influence of sample `j` on query `q` over `window`. Requires the
/// trajectory to hold every step in `[0, t2)`.
pub fn compute_influence(
    trajectory: &TrajectoryStore,
    dataset: &Dataset,
    q: &QuerySpec,
    window: TimeWindow,
    j: usize,
) -> Result<InfluenceRecord> {
    let values = sweep(&mut &*trajectory, dataset, q, window, Targets::One(j))?;
    Ok(records(values, j, q, window).remove(0))
}

/// Influence of every training sample from one shared sweep. The carriers
/// do not depend on `j`, so each entry equals the single-sample result
/// bit for bit.
pub fn compute_influence_all(
    trajectory: &TrajectoryStore,
    dataset: &Dataset,
    q: &QuerySpec,
    window: TimeWindow,
) -> Result<Vec<InfluenceRecord>> {
    let values = sweep(&mut &*trajectory, dataset, q, window, Targets::All(trajectory.n))?;
    Ok(records(values, 0, q, window))
}

/// Checkpoint-based influence. Parameters are recomputed segment by segment
/// from the stored checkpoints while sweeping backwards, and the sweep runs
/// all the way to step 0, so the result equals [`compute_influence`] on a
/// fully logged twin run.
pub fn compute_influence_ckpt(
    store: &CheckpointStore,
    dataset: &Dataset,
    q: &QuerySpec,
    window: TimeWindow,
    j: usize,
) -> Result<InfluenceRecord> {
    let mut src = CheckpointSource {
        store,
        dataset,
        cache: BTreeMap::new(),
    };
    let values = sweep(&mut src, dataset, q, window, Targets::One(j))?;
    Ok(records(values, j, q, window).remove(0))
}

pub fn compute_influence_ckpt_all(
    store: &CheckpointStore,
    dataset: &Dataset,
    q: &QuerySpec,
    window: TimeWindow,
) -> Result<Vec<InfluenceRecord>> {
    let mut src = CheckpointSource {
        store,
        dataset,
        cache: BTreeMap::new(),
    };
    let values = sweep(&mut src, dataset, q, window, Targets::All(store.n))?;
    Ok(records(values, 0, q, window))
}
