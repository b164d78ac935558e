//! Differentiable model kernels: loss, gradient, Hessian-vector product,
//! prediction and mixed derivatives for linear models and small ReLU MLPs.
//!
//! Parameters are a flat vector. Layout is layer-major; inside a layer the
//! weight matrix comes first (row-major, `out x in`) followed by the bias.
//! A linear model is therefore `[w_0, .., w_{d-1}, b]`.

mod linear;
mod mlp;

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// One observation `(x, y)` with a binary label stored as `0.0` or `1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

/// Flat model parameter vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(p: usize) -> Self {
        Self(vec![0.0; p])
    }

    /// Standard basis vector `e_i` in `R^p`.
    pub fn basis(p: usize, i: usize) -> Self {
        let mut v = vec![0.0; p];
        v[i] = 1.0;
        Self(v)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        crate::linalg::all_finite(&self.0)
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Indices of the samples drawn for one SGD step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Batch(Vec<usize>);

impl Batch {
    /// Checks uniqueness and range against a dataset of `n` samples.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        for (pos, &i) in indices.iter().enumerate() {
            if i >= n {
                return Err(Error::IndexOutOfRange {
                    what: "batch",
                    index: i,
                    len: n,
                });
            }
            if indices[..pos].contains(&i) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "duplicate index {i} in batch"
                )));
            }
        }
        Ok(Self(indices))
    }

    pub(crate) fn from_unchecked(indices: Vec<usize>) -> Self {
        Self(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.contains(&j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Linear logit with binary cross-entropy.
    LogisticRegression,
    /// Dense ReLU network with a single logit output and binary cross-entropy.
    Mlp,
    /// Linear model with squared error `0.5 (w.x + b - y)^2`; constant Hessian.
    LeastSquares,
}

/// Immutable model description. The parameter count is a pure function of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    kind: ModelKind,
    input_dim: usize,
    hidden_widths: Vec<usize>,
    activation: Activation,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize) -> Self {
        Self {
            kind: ModelKind::LogisticRegression,
            input_dim,
            hidden_widths: Vec::new(),
            activation: Activation::Relu,
        }
    }

    pub fn least_squares(input_dim: usize) -> Self {
        Self {
            kind: ModelKind::LeastSquares,
            ..Self::logistic(input_dim)
        }
    }

    pub fn mlp(input_dim: usize, hidden_widths: Vec<usize>) -> Result<Self> {
        if hidden_widths.contains(&0) {
            return Err(Error::InvalidConfig("hidden widths must be positive".into()));
        }
        Ok(Self {
            kind: ModelKind::Mlp,
            input_dim,
            hidden_widths,
            activation: Activation::Relu,
        })
    }

    /// Two hidden layers of eight ReLU units.
    pub fn default_mlp(input_dim: usize) -> Self {
        Self::mlp(input_dim, vec![8, 8]).expect("static widths")
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_params(&self) -> usize {
        match self.kind {
            ModelKind::LogisticRegression | ModelKind::LeastSquares => self.input_dim + 1,
            ModelKind::Mlp => mlp::Layout::new(self).num_params(),
        }
    }

    /// Seeded initial parameters: zeros for linear models, uniform
    /// `+-1/sqrt(fan_in)` for MLP layers.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        match self.kind {
            ModelKind::LogisticRegression | ModelKind::LeastSquares => ParamVector::zeros(self.num_params()),
            ModelKind::Mlp => {
                let layout = mlp::Layout::new(self);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(1);
                let mut v = vec![0.0; layout.num_params()];
                for layer in layout.layers() {
                    let bound = 1.0 / libm::sqrt(layer.fan_in as f64);
                    for x in &mut v[layer.w_off..layer.b_off + layer.fan_out] {
                        *x = rng.random_range(-bound..bound);
                    }
                }
                ParamVector(v)
            }
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        let p = self.num_params();
        if params.len() != p {
            return Err(Error::DimensionMismatch {
                what: "parameters",
                expected: p,
                got: params.len(),
            });
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                what: "input",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Loss as a function of the scalar model output.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Head {
    Logistic,
    Squared,
}

impl Head {
    fn of(kind: ModelKind) -> Self {
        match kind {
            ModelKind::LeastSquares => Head::Squared,
            _ => Head::Logistic,
        }
    }

    pub(crate) fn loss(self, z: f64, y: f64) -> f64 {
        match self {
            // log(1 + e^z) - y z, written without overflow.
            Head::Logistic => z.max(0.0) - z * y + libm::log1p(libm::exp(-z.abs())),
            Head::Squared => 0.5 * (z - y) * (z - y),
        }
    }

    pub(crate) fn d1(self, z: f64, y: f64) -> f64 {
        match self {
            Head::Logistic => sigmoid(z) - y,
            Head::Squared => z - y,
        }
    }

    pub(crate) fn d2(self, z: f64) -> f64 {
        match self {
            Head::Logistic => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Head::Squared => 1.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

pub fn loss(model: &ModelSpec, params: &[f64], z: &Sample) -> Result<f64> {
    let f = predict(model, params, &z.x)?;
    Ok(Head::of(model.kind).loss(f, z.y))
}

/// Mean loss over a set of samples.
pub fn mean_loss<'a, I>(model: &ModelSpec, params: &[f64], samples: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a Sample>,
{
    let mut acc = 0.0;
    let mut n = 0usize;
    for z in samples {
        acc += loss(model, params, z)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(acc / n as f64)
}

/// Gradient of the loss with respect to the parameters.
pub fn grad(model: &ModelSpec, params: &[f64], z: &Sample) -> Result<ParamVector> {
    let mut out = vec![0.0; params.len()];
    grad_into(model, params, z, &mut out)?;
    Ok(ParamVector(out))
}

/// Adds `scale * grad` into `out`.
pub(crate) fn grad_accumulate(
    model: &ModelSpec,
    params: &[f64],
    z: &Sample,
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    model.check_params(params)?;
    model.check_input(&z.x)?;
    let head = Head::of(model.kind);
    match model.kind {
        ModelKind::LogisticRegression | ModelKind::LeastSquares => {
            linear::grad_accumulate(head, params, z, scale, out)
        }
        ModelKind::Mlp => mlp::Layout::new(model).grad_accumulate(head, params, z, scale, out),
    }
    Ok(())
}

fn grad_into(model: &ModelSpec, params: &[f64], z: &Sample, out: &mut [f64]) -> Result<()> {
    out.iter_mut().for_each(|v| *v = 0.0);
    grad_accumulate(model, params, z, 1.0, out)
}

/// Batch-mean Hessian times `v`.
pub fn hvp<'a, I>(model: &ModelSpec, params: &[f64], batch: I, v: &[f64]) -> Result<ParamVector>
where
    I: IntoIterator<Item = &'a Sample>,
{
    let mut out = hvp_many(model, params, batch, &[v])?;
    Ok(ParamVector(out.pop().expect("one direction")))
}

/// Batch-mean Hessian applied to several directions, sharing the forward
/// pass per sample. Each output is summed over the batch in input order and
/// then divided by the batch size.
pub fn hvp_many<'a, I>(model: &ModelSpec, params: &[f64], batch: I, dirs: &[&[f64]]) -> Result<Vec<Vec<f64>>>
where
    I: IntoIterator<Item = &'a Sample>,
{
    model.check_params(params)?;
    let p = params.len();
    for d in dirs {
        if d.len() != p {
            return Err(Error::DimensionMismatch {
                what: "hvp direction",
                expected: p,
                got: d.len(),
            });
        }
    }
    let head = Head::of(model.kind);
    let mut outs: Vec<Vec<f64>> = dirs.iter().map(|_| vec![0.0; p]).collect();
    let mut n = 0usize;
    let layout = match model.kind {
        ModelKind::Mlp => Some(mlp::Layout::new(model)),
        _ => None,
    };
    for z in batch {
        model.check_input(&z.x)?;
        match &layout {
            None => linear::hvp_accumulate(head, params, z, dirs, &mut outs),
            Some(l) => l.hvp_accumulate(head, params, z, dirs, &mut outs),
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let count = n as f64;
    for o in &mut outs {
        o.iter_mut().for_each(|x| *x /= count);
    }
    Ok(outs)
}

/// Model output before the sigmoid (the logit for classifiers).
pub fn predict(model: &ModelSpec, params: &[f64], x: &[f64]) -> Result<f64> {
    model.check_params(params)?;
    model.check_input(x)?;
    Ok(match model.kind {
        ModelKind::LogisticRegression | ModelKind::LeastSquares => linear::predict(params, x),
        ModelKind::Mlp => mlp::Layout::new(model).predict(params, x),
    })
}

/// Gradient of [`predict`] with respect to the parameters.
pub fn predict_grad(model: &ModelSpec, params: &[f64], x: &[f64]) -> Result<ParamVector> {
    model.check_params(params)?;
    model.check_input(x)?;
    let mut out = vec![0.0; params.len()];
    match model.kind {
        ModelKind::LogisticRegression | ModelKind::LeastSquares => {
            out[..x.len()].copy_from_slice(x);
            out[x.len()] = 1.0;
        }
        ModelKind::Mlp => mlp::Layout::new(model).predict_grad(params, x, &mut out),
    }
    Ok(ParamVector(out))
}

/// `grad_theta (d loss / d x_k)`: one row of the mixed input/parameter
/// derivative. Closed form for linear models; for MLPs a central difference
/// in `x_k` of the parameter gradient with step `1e-5 (1 + |x_k|)`.
pub fn feature_param_grad(model: &ModelSpec, params: &[f64], z: &Sample, k: usize) -> Result<ParamVector> {
    model.check_params(params)?;
    model.check_input(&z.x)?;
    if k >= model.input_dim {
        return Err(Error::IndexOutOfRange {
            what: "feature",
            index: k,
            len: model.input_dim,
        });
    }
    let head = Head::of(model.kind);
    match model.kind {
        ModelKind::LogisticRegression | ModelKind::LeastSquares => {
            Ok(ParamVector(linear::feature_param_grad(head, params, z, k)))
        }
        ModelKind::Mlp => {
            let h = 1e-5 * (1.0 + z.x[k].abs());
            let mut plus = z.clone();
            plus.x[k] += h;
            let mut minus = z.clone();
            minus.x[k] -= h;
            let gp = grad(model, params, &plus)?;
            let gm = grad(model, params, &minus)?;
            let span = plus.x[k] - minus.x[k];
            Ok(ParamVector(
                gp.iter().zip(gm.iter()).map(|(a, b)| (a - b) / span).collect(),
            ))
        }
    }
}
