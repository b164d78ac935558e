//! Linear model `z = w.x + b` with closed-form derivatives.

use alloc::vec;
use alloc::vec::Vec;

use super::{Head, Sample};
use crate::linalg::dot;

pub(super) fn predict(params: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    dot(&params[..d], x) + params[d]
}

pub(super) fn grad_accumulate(head: Head, params: &[f64], z: &Sample, scale: f64, out: &mut [f64]) {
    let d = z.x.len();
    let r = scale * head.d1(predict(params, &z.x), z.y);
    for (o, xi) in out[..d].iter_mut().zip(&z.x) {
        *o += r * xi;
    }
    out[d] += r;
}

/// Per-sample Hessian is `h''(z) x~ x~^T` with `x~ = (x, 1)`.
pub(super) fn hvp_accumulate(head: Head, params: &[f64], z: &Sample, dirs: &[&[f64]], outs: &mut [Vec<f64>]) {
    let d = z.x.len();
    let curvature = head.d2(predict(params, &z.x));
    for (v, out) in dirs.iter().zip(outs.iter_mut()) {
        let proj = curvature * (dot(&v[..d], &z.x) + v[d]);
        for (o, xi) in out[..d].iter_mut().zip(&z.x) {
            *o += proj * xi;
        }
        out[d] += proj;
    }
}

/// `d loss / d x_k = h'(z) w_k`; its parameter gradient is
/// `h''(z) w_k x~ + h'(z) e_{w_k}`.
pub(super) fn feature_param_grad(head: Head, params: &[f64], z: &Sample, k: usize) -> Vec<f64> {
    let d = z.x.len();
    let f = predict(params, &z.x);
    let r = head.d1(f, z.y);
    let c = head.d2(f) * params[k];
    let mut out = vec![0.0; d + 1];
    for (o, xi) in out[..d].iter_mut().zip(&z.x) {
        *o = c * xi;
    }
    out[d] = c;
    out[k] += r;
    out
}
