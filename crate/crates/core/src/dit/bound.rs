//! Computable error bound for the linearised parameter change.

use alloc::vec::Vec;

use super::TimeWindow;
use crate::data::Dataset;
use crate::linalg::{norm2, symmetric_operator_norm};
use crate::numkit::{self, ModelKind, Sample};
use crate::trainer::{counterfactual_from_trajectory, TrajectoryStore};
use crate::{Error, Result};

const POWER_ITERS: usize = 1000;
const LH_SAMPLE_STEPS: usize = 16;
const LH_SAMPLES_PER_STEP: usize = 4;

/// Constants of the bound. `l_h`: Lipschitz constant of per-sample Hessians;
/// `epsilon_h`: largest gap between the full and the leave-one-out batch
/// Hessian; `m`: largest parameter deviation; `m_h`: largest batch-Hessian
/// norm; `eta_max`: largest learning rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub l_h: f64,
    pub epsilon_h: f64,
    pub m: f64,
    pub m_h: f64,
    pub eta_max: f64,
}

impl BoundConstants {
    /// `L_H M^2 / 2 + eps_H M`.
    pub fn b_tilde(&self) -> f64 {
        0.5 * self.l_h * self.m * self.m + self.epsilon_h * self.m
    }

    fn validate(&self) -> Result<()> {
        let all = [self.l_h, self.epsilon_h, self.m, self.m_h, self.eta_max];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(
                "bound constants must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// `(B/M_H) (exp(M_H eta (t2+1)) + exp(M_H eta (t1+1)) - 2)`, and the limit
/// `B eta (t1 + t2 + 2)` when `M_H = 0`.
pub fn error_bound(c: &BoundConstants, window: TimeWindow) -> Result<f64> {
    c.validate()?;
    let b = c.b_tilde();
    let (t1, t2) = ((window.t1 + 1) as f64, (window.t2 + 1) as f64);
    if c.m_h == 0.0 {
        return Ok(b * c.eta_max * (t1 + t2));
    }
    let r = c.m_h * c.eta_max;
    Ok(b / c.m_h * (libm::expm1(r * t2) + libm::expm1(r * t1)))
}

fn extended_norm(x: &[f64]) -> f64 {
    libm::sqrt(x.iter().map(|v| v * v).sum::<f64>() + 1.0)
}

fn sample_hessian_norm(model: &numkit::ModelSpec, theta: &[f64], z: &Sample) -> Result<f64> {
    symmetric_operator_norm(theta.len(), POWER_ITERS, |v| {
        Ok(numkit::hvp(model, theta, core::iter::once(z), v)?.into_inner())
    })
}

/// Measures the bound constants over `[0, t2]` for sample `j`. The deviation
/// `M` comes from a counterfactual replay of the logged batches, so the
/// trajectory must cover every step.
///
/// `epsilon_h` is taken with the batch divisor kept at `|S_t|`, matching the
/// update rule of the counterfactual run: the gap is `||H_j(theta[t])|| / |S_t|`
/// when `j` is in `S_t` and zero otherwise. `l_h` is analytic for the linear
/// models and sampled along the run for the MLP.
pub fn estimate_constants(
    trajectory: &TrajectoryStore,
    dataset: &Dataset,
    j: usize,
    window: TimeWindow,
) -> Result<BoundConstants> {
    TimeWindow::new(window.t1, window.t2, trajectory.steps)?;
    if dataset.len() != trajectory.n {
        return Err(Error::DimensionMismatch {
            what: "dataset size",
            expected: trajectory.n,
            got: dataset.len(),
        });
    }
    let model = &trajectory.model;
    let samples = dataset.samples();
    let p = trajectory.num_params();

    let mut m_h: f64 = 0.0;
    let mut epsilon_h: f64 = 0.0;
    let mut eta_max: f64 = 0.0;
    for t in 0..window.t2 {
        let r = trajectory.record(t).ok_or(Error::NotStored { step: t })?;
        let theta = trajectory.params_at(t)?;
        let members: Vec<&Sample> = r
            .batch
            .indices()
            .iter()
            .map(|&i| dataset.get(i))
            .collect::<Result<_>>()?;
        let norm = symmetric_operator_norm(p, POWER_ITERS, |v| {
            Ok(numkit::hvp(model, theta, members.iter().copied(), v)?.into_inner())
        })?;
        m_h = m_h.max(norm);
        if r.batch.contains(j) {
            let hj = sample_hessian_norm(model, theta, dataset.get(j)?)?;
            epsilon_h = epsilon_h.max(hj / r.batch.len() as f64);
        }
        eta_max = eta_max.max(r.lr);
    }

    let stride = (window.t2 / LH_SAMPLE_STEPS).max(1);
    let mut m: f64 = 0.0;
    let mut sampled_lh: f64 = 0.0;
    counterfactual_from_trajectory(trajectory, dataset, j, |t, theta_cf| {
        if t > window.t2 {
            return Ok(());
        }
        let theta = trajectory.params_at(t)?;
        let delta: Vec<f64> = theta_cf.iter().zip(theta.iter()).map(|(a, b)| a - b).collect();
        let dn = norm2(&delta);
        m = m.max(dn);
        if model.kind() == ModelKind::Mlp && t < window.t2 && t % stride == 0 && dn > 0.0 {
            let r = trajectory.record(t).ok_or(Error::NotStored { step: t })?;
            for &i in r
                .batch
                .indices()
                .iter()
                .filter(|&&i| i != j)
                .take(LH_SAMPLES_PER_STEP)
            {
                let z = &samples[i];
                let gap = symmetric_operator_norm(p, POWER_ITERS, |v| {
                    let a = numkit::hvp(model, theta_cf, core::iter::once(z), v)?;
                    let b = numkit::hvp(model, theta, core::iter::once(z), v)?;
                    Ok(a.iter().zip(b.iter()).map(|(x, y)| x - y).collect())
                })?;
                sampled_lh = sampled_lh.max(gap / dn);
            }
        }
        Ok(())
    })?;

    let l_h = match model.kind() {
        // |sigma''| <= 1/(6 sqrt 3) and the Hessian is sigma'(x.w) x x^T.
        ModelKind::LogisticRegression => {
            let peak = 1.0 / (6.0 * libm::sqrt(3.0));
            samples
                .iter()
                .map(|z| peak * libm::pow(extended_norm(&z.x), 3.0))
                .fold(0.0, f64::max)
        }
        ModelKind::LeastSquares => 0.0,
        ModelKind::Mlp => sampled_lh,
    };

    let c = BoundConstants {
        l_h,
        epsilon_h,
        m,
        m_h,
        eta_max,
    };
    c.validate()?;
    Ok(c)
}
