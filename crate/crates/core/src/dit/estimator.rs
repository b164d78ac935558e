//! Linearised parameter change `d[t1, t2] = d[t2] - d[t1]`.

use alloc::vec;
use alloc::vec::Vec;

use super::TimeWindow;
use crate::data::Dataset;
use crate::linalg::{all_finite, DenseMatrix, DENSE_LIMIT};
use crate::numkit::{self, Batch, ModelSpec, ParamVector};
use crate::trainer::TrajectoryStore;
use crate::{Error, Result};

struct Step<'a> {
    theta: &'a [f64],
    batch: &'a Batch,
    lr: f64,
}

fn check(trajectory: &TrajectoryStore, dataset: &Dataset, window: TimeWindow, j: usize) -> Result<()> {
    TimeWindow::new(window.t1, window.t2, trajectory.steps)?;
    if dataset.len() != trajectory.n {
        return Err(Error::DimensionMismatch {
            what: "dataset size",
            expected: trajectory.n,
            got: dataset.len(),
        });
    }
    dataset.get(j)?;
    if !trajectory.covers_prefix(window.t2) {
        return Err(Error::NotStored { step: 0 });
    }
    Ok(())
}

fn step(trajectory: &TrajectoryStore, t: usize) -> Result<Step<'_>> {
    let r = trajectory.record(t).ok_or(Error::NotStored { step: t })?;
    Ok(Step {
        theta: trajectory.params_at(t)?,
        batch: &r.batch,
        lr: r.lr,
    })
}

/// `1{j in S_t} lr_t/|S_t| g(z_j; theta[t])`, or `None` when `j` is absent.
fn indicator(model: &ModelSpec, dataset: &Dataset, s: &Step<'_>, j: usize) -> Result<Option<Vec<f64>>> {
    if !s.batch.contains(j) {
        return Ok(None);
    }
    let scale = s.lr / s.batch.len() as f64;
    let g = numkit::grad(model, s.theta, dataset.get(j)?)?;
    Ok(Some(g.iter().map(|v| scale * v).collect()))
}

fn batch_hvp(model: &ModelSpec, dataset: &Dataset, s: &Step<'_>, v: &[f64]) -> Result<ParamVector> {
    let members = s
        .batch
        .indices()
        .iter()
        .map(|&i| dataset.get(i))
        .collect::<Result<Vec<_>>>()?;
    numkit::hvp(model, s.theta, members, v)
}

/// Matrix-free evaluation via the forward recursion
/// `d[t+1] = (I - lr_t H[t]) d[t] + 1_t`, `d[0] = 0`.
pub fn estimate_param_change(
    trajectory: &TrajectoryStore,
    dataset: &Dataset,
    window: TimeWindow,
    j: usize,
) -> Result<ParamVector> {
    check(trajectory, dataset, window, j)?;
    let model = &trajectory.model;
    let mut d = vec![0.0; trajectory.num_params()];
    let mut at_t1 = d.clone();
    for t in 0..window.t2 {
        if t == window.t1 {
            at_t1.clone_from(&d);
        }
        let s = step(trajectory, t)?;
        let hd = batch_hvp(model, dataset, &s, &d)?;
        for (di, h) in d.iter_mut().zip(hd.iter()) {
            *di -= s.lr * h;
        }
        if let Some(ind) = indicator(model, dataset, &s, j)? {
            for (di, v) in d.iter_mut().zip(&ind) {
                *di += v;
            }
        }
        if !all_finite(&d) {
            return Err(Error::NonFinite { step: t });
        }
    }
    Ok(ParamVector::from(
        d.iter().zip(&at_t1).map(|(a, b)| a - b).collect::<Vec<_>>(),
    ))
}

/// Literal evaluation with dense `Z_t = I - lr_t H[t]`:
///
/// `(Z_{t2-1}..Z_{t1} - I) d[t1] + sum_{t1<=t<t2} Z_{t2-1}..Z_{t+1} 1_t`,
/// with `d[t1] = sum_{t<t1} Z_{t1-1}..Z_{t+1} 1_t`.
///
/// Every Hessian is materialised column by column, so this is only meant for
/// small models.
pub fn estimate_param_change_dense(
    trajectory: &TrajectoryStore,
    dataset: &Dataset,
    window: TimeWindow,
    j: usize,
) -> Result<ParamVector> {
    let p = trajectory.num_params();
    if p > DENSE_LIMIT {
        return Err(Error::DenseGuard {
            p,
            limit: DENSE_LIMIT,
        });
    }
    check(trajectory, dataset, window, j)?;
    let model = &trajectory.model;

    let mut zs = Vec::with_capacity(window.t2);
    let mut inds = Vec::with_capacity(window.t2);
    for t in 0..window.t2 {
        let s = step(trajectory, t)?;
        let h = DenseMatrix::from_columns(p, p, |k| {
            Ok(batch_hvp(model, dataset, &s, &ParamVector::basis(p, k))?.into_inner())
        })?;
        let mut z = DenseMatrix::identity(p);
        for a in 0..p {
            for b in 0..p {
                z[(a, b)] -= s.lr * h[(a, b)];
            }
        }
        zs.push(z);
        inds.push(indicator(model, dataset, &s, j)?);
    }

    // Z_{end-1} .. Z_{t+1} applied to 1_t, summed over `t in from..end`.
    let propagated_sum = |from: usize, end: usize| -> Vec<f64> {
        let mut total = vec![0.0; p];
        for t in from..end {
            let Some(ind) = &inds[t] else { continue };
            let mut prod = DenseMatrix::identity(p);
            for z in &zs[t + 1..end] {
                prod = z.matmul(&prod);
            }
            for (acc, v) in total.iter_mut().zip(prod.matvec(ind)) {
                *acc += v;
            }
        }
        total
    };

    let inner = propagated_sum(0, window.t1);
    let mut chain = DenseMatrix::identity(p);
    for z in &zs[window.t1..window.t2] {
        chain = z.matmul(&chain);
    }
    for k in 0..p {
        chain[(k, k)] -= 1.0;
    }
    let first = chain.matvec(&inner);
    let second = propagated_sum(window.t1, window.t2);
    let out: Vec<f64> = first.iter().zip(&second).map(|(a, b)| a + b).collect();
    if !all_finite(&out) {
        return Err(Error::NonFinite { step: window.t2 });
    }
    Ok(ParamVector::from(out))
}
