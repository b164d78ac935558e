use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::numkit::{self, ModelSpec, ParamVector, Sample};
use crate::{Error, Result};

/// A direction in parameter space as a function of the training step.
#[derive(Debug, Clone, PartialEq)]
pub enum QuerySpec {
    /// `grad loss(z_test; theta[t])`
    TestLoss(Sample),
    /// Mean test-set loss gradient.
    TestSetLoss(Vec<Sample>),
    /// `grad f(x_test; theta[t])`, `f` the pre-sigmoid output.
    Prediction(Vec<f64>),
    /// `e_i`, constant in time.
    ParamBasis(usize),
    /// `grad_theta (d loss(z_test) / d x_k)`
    FeatureImportance { sample: Sample, feature: usize },
    /// `grad loss(z; theta[t])` for a given training sample `z`.
    SelfGradient(Sample),
}

impl QuerySpec {
    /// Short identifier used in reports.
    pub fn id(&self) -> String {
        match self {
            QuerySpec::TestLoss(_) => "test_loss".into(),
            QuerySpec::TestSetLoss(_) => "test_set_loss".into(),
            QuerySpec::Prediction(_) => "prediction".into(),
            QuerySpec::ParamBasis(i) => format!("param_basis:{i}"),
            QuerySpec::FeatureImportance { feature, .. } => format!("feature_importance:{feature}"),
            QuerySpec::SelfGradient(_) => "self_gradient".into(),
        }
    }

    /// Evaluates `q` at parameters `theta`.
    pub fn at(&self, model: &ModelSpec, theta: &[f64]) -> Result<ParamVector> {
        let q = match self {
            QuerySpec::TestLoss(z) | QuerySpec::SelfGradient(z) => numkit::grad(model, theta, z)?,
            QuerySpec::TestSetLoss(set) => {
                if set.is_empty() {
                    return Err(Error::EmptyDataset);
                }
                let mut acc = vec![0.0; theta.len()];
                for z in set {
                    numkit::grad_accumulate(model, theta, z, 1.0, &mut acc)?;
                }
                let m = set.len() as f64;
                acc.iter_mut().for_each(|v| *v /= m);
                ParamVector::from(acc)
            }
            QuerySpec::Prediction(x) => numkit::predict_grad(model, theta, x)?,
            QuerySpec::ParamBasis(i) => {
                if *i >= theta.len() {
                    return Err(Error::IndexOutOfRange {
                        what: "parameter",
                        index: *i,
                        len: theta.len(),
                    });
                }
                ParamVector::basis(theta.len(), *i)
            }
            QuerySpec::FeatureImportance { sample, feature } => {
                numkit::feature_param_grad(model, theta, sample, *feature)?
            }
        };
        if !q.is_finite() {
            return Err(Error::NonFinite { step: usize::MAX });
        }
        Ok(q)
    }
}

/// `q(t)` using `theta[t]` from the trajectory.
pub fn eval_query(
    q: &QuerySpec,
    trajectory: &crate::trainer::TrajectoryStore,
    t: usize,
) -> Result<ParamVector> {
    if t > trajectory.steps {
        return Err(Error::NotStored { step: t });
    }
    q.at(&trajectory.model, trajectory.params_at(t)?)
}
