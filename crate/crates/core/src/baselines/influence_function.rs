use alloc::vec::Vec;

use crate::data::Dataset;
use crate::linalg::{dot, DenseMatrix, DENSE_LIMIT};
use crate::numkit::{self, ModelSpec, ParamVector, Sample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IfResult {
    pub j: usize,
    /// Upweighting score `-grad L_test^T (H + lambda I)^{-1} grad loss(z_j)`.
    pub score: f64,
    pub damping: f64,
    /// First-order test-loss change from removing `z_j`: `-score / N`. Same
    /// sign convention as a leave-one-out delta.
    pub removal_estimate: f64,
}

/// `1e-3 * |trace(H)| / p`, floored at a small positive value.
pub fn default_damping(h: &DenseMatrix) -> f64 {
    let p = h.rows().max(1) as f64;
    (1e-3 * h.trace().abs() / p).max(1e-10)
}

/// Dense Hessian of the mean training loss at fixed parameters with the
/// damped system already solved against the mean test gradient, so scoring
/// each sample costs one gradient and one dot product.
#[derive(Debug, Clone)]
pub struct IfEstimator {
    model: ModelSpec,
    params: ParamVector,
    n: usize,
    damping: f64,
    solved: Vec<f64>,
}

impl IfEstimator {
    /// `damping = None` selects [`default_damping`].
    pub fn new(
        dataset: &Dataset,
        model: &ModelSpec,
        params: &[f64],
        test_set: &[Sample],
        damping: Option<f64>,
    ) -> Result<Self> {
        let p = params.len();
        if p > DENSE_LIMIT {
            return Err(Error::DenseGuard {
                p,
                limit: DENSE_LIMIT,
            });
        }
        if dataset.is_empty() || test_set.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let basis: Vec<ParamVector> = (0..p).map(|k| ParamVector::basis(p, k)).collect();
        let dirs: Vec<&[f64]> = basis.iter().map(|b| b.as_slice()).collect();
        let cols = numkit::hvp_many(model, params, dataset.samples(), &dirs)?;
        let mut h = DenseMatrix::from_columns(p, p, |k| Ok(cols[k].clone()))?;
        let lambda = match damping {
            Some(l) if l > 0.0 && l.is_finite() => l,
            Some(l) => {
                return Err(Error::InvalidConfig(alloc::format!(
                    "damping must be positive, got {l}"
                )));
            }
            None => default_damping(&h),
        };
        for k in 0..p {
            h[(k, k)] += lambda;
        }
        let mut test_grad = alloc::vec![0.0; p];
        for z in test_set {
            numkit::grad_accumulate(model, params, z, 1.0, &mut test_grad)?;
        }
        let m = test_set.len() as f64;
        test_grad.iter_mut().for_each(|v| *v /= m);
        let solved = h.solve(&test_grad)?;
        Ok(Self {
            model: model.clone(),
            params: ParamVector::from(params.to_vec()),
            n: dataset.len(),
            damping: lambda,
            solved,
        })
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn score(&self, dataset: &Dataset, j: usize) -> Result<IfResult> {
        let g = numkit::grad(&self.model, &self.params, dataset.get(j)?)?;
        let score = -dot(&self.solved, &g);
        if !score.is_finite() {
            return Err(Error::NonFinite { step: usize::MAX });
        }
        Ok(IfResult {
            j,
            score,
            damping: self.damping,
            removal_estimate: -score / self.n as f64,
        })
    }

    pub fn score_all(&self, dataset: &Dataset) -> Result<Vec<IfResult>> {
        (0..dataset.len()).map(|j| self.score(dataset, j)).collect()
    }
}

pub fn if_influence(
    dataset: &Dataset,
    model: &ModelSpec,
    final_params: &[f64],
    j: usize,
    test_set: &[Sample],
    damping: Option<f64>,
) -> Result<IfResult> {
    IfEstimator::new(dataset, model, final_params, test_set, damping)?.score(dataset, j)
}
