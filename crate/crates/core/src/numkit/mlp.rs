//! Dense ReLU network with one scalar output.
//!
//! Hessian-vector products use the forward-over-reverse (R-operator) rules;
//! ReLU has zero second derivative, and its derivative at exactly 0 is 0.

use alloc::vec;
use alloc::vec::Vec;

use super::{Head, ModelSpec, Sample};

#[derive(Debug, Clone, Copy)]
pub(super) struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl Layer {
    fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.w_off..self.b_off]
    }

    fn bias<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.b_off..self.b_off + self.fan_out]
    }

    /// `W a + b`
    fn affine(&self, params: &[f64], a: &[f64]) -> Vec<f64> {
        let w = self.weights(params);
        let b = self.bias(params);
        (0..self.fan_out)
            .map(|o| {
                let row = &w[o * self.fan_in..(o + 1) * self.fan_in];
                let mut s = b[o];
                for (wi, ai) in row.iter().zip(a) {
                    s += wi * ai;
                }
                s
            })
            .collect()
    }

    /// `W^T d`
    fn back(&self, params: &[f64], d: &[f64]) -> Vec<f64> {
        let w = self.weights(params);
        let mut g = vec![0.0; self.fan_in];
        for (o, &dv) in d.iter().enumerate() {
            if dv == 0.0 {
                continue;
            }
            let row = &w[o * self.fan_in..(o + 1) * self.fan_in];
            for (gi, wi) in g.iter_mut().zip(row) {
                *gi += wi * dv;
            }
        }
        g
    }

    /// Adds `scale * (d a^T, d)` into the layer's slots of `out`.
    fn outer_accumulate(&self, d: &[f64], a: &[f64], scale: f64, out: &mut [f64]) {
        for (o, &dv) in d.iter().enumerate() {
            let s = scale * dv;
            if s == 0.0 {
                continue;
            }
            let row = &mut out[self.w_off + o * self.fan_in..self.w_off + (o + 1) * self.fan_in];
            for (r, ai) in row.iter_mut().zip(a) {
                *r += s * ai;
            }
            out[self.b_off + o] += s;
        }
    }
}

pub(super) struct Layout {
    layers: Vec<Layer>,
}

struct Forward {
    /// Inputs to each layer; `acts[0] = x`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer; the last holds the output.
    pre: Vec<Vec<f64>>,
}

fn relu_mask(pre: &[f64], v: &mut [f64]) {
    for (vi, a) in v.iter_mut().zip(pre) {
        if *a <= 0.0 {
            *vi = 0.0;
        }
    }
}

impl Layout {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut sizes = Vec::with_capacity(spec.hidden_widths().len() + 2);
        sizes.push(spec.input_dim());
        sizes.extend_from_slice(spec.hidden_widths());
        sizes.push(1);
        let mut off = 0;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let l = Layer {
                    fan_in: w[0],
                    fan_out: w[1],
                    w_off: off,
                    b_off: off + w[0] * w[1],
                };
                off = l.b_off + l.fan_out;
                l
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.layers.iter()
    }

    pub fn num_params(&self) -> usize {
        self.layers.last().map_or(0, |l| l.b_off + l.fan_out)
    }

    fn forward(&self, params: &[f64], x: &[f64]) -> Forward {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let a = layer.affine(params, &acts[l]);
            if l + 1 < self.layers.len() {
                acts.push(a.iter().map(|v| v.max(0.0)).collect());
            }
            pre.push(a);
        }
        Forward { acts, pre }
    }

    pub fn predict(&self, params: &[f64], x: &[f64]) -> f64 {
        self.forward(params, x).pre.last().expect("output layer")[0]
    }

    /// Backpropagates an output sensitivity `dout` and adds `scale *` the
    /// parameter gradient into `out`.
    fn backward(&self, params: &[f64], fw: &Forward, dout: f64, scale: f64, out: &mut [f64]) {
        let mut delta = vec![dout];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            layer.outer_accumulate(&delta, &fw.acts[l], scale, out);
            if l > 0 {
                let mut g = layer.back(params, &delta);
                relu_mask(&fw.pre[l - 1], &mut g);
                delta = g;
            }
        }
    }

    pub fn grad_accumulate(&self, head: Head, params: &[f64], z: &Sample, scale: f64, out: &mut [f64]) {
        let fw = self.forward(params, &z.x);
        let f = fw.pre.last().expect("output layer")[0];
        self.backward(params, &fw, head.d1(f, z.y), scale, out);
    }

    pub fn predict_grad(&self, params: &[f64], x: &[f64], out: &mut [f64]) {
        let fw = self.forward(params, x);
        self.backward(params, &fw, 1.0, 1.0, out);
    }

    pub fn hvp_accumulate(
        &self,
        head: Head,
        params: &[f64],
        z: &Sample,
        dirs: &[&[f64]],
        outs: &mut [Vec<f64>],
    ) {
        let fw = self.forward(params, &z.x);
        let f = fw.pre.last().expect("output layer")[0];
        let d1 = head.d1(f, z.y);
        let d2 = head.d2(f);
        let n_layers = self.layers.len();
        for (v, out) in dirs.iter().zip(outs.iter_mut()) {
            // R-forward: directional derivatives of activations.
            let mut r_acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
            r_acts.push(vec![0.0; z.x.len()]);
            let mut r_out = 0.0;
            for (l, layer) in self.layers.iter().enumerate() {
                let mut r = layer.affine(v, &fw.acts[l]);
                if l > 0 {
                    let wr = layer.affine_no_bias(params, &r_acts[l]);
                    for (ri, wi) in r.iter_mut().zip(wr) {
                        *ri += wi;
                    }
                }
                if l + 1 < n_layers {
                    relu_mask(&fw.pre[l], &mut r);
                    r_acts.push(r);
                } else {
                    r_out = r[0];
                }
            }
            // R-backward.
            let mut delta = vec![d1];
            let mut r_delta = vec![d2 * r_out];
            for l in (0..n_layers).rev() {
                let layer = &self.layers[l];
                layer.outer_accumulate(&r_delta, &fw.acts[l], 1.0, out);
                if l > 0 {
                    // The delta (x) R(a) term only touches weights, not bias.
                    for (o, &dv) in delta.iter().enumerate() {
                        if dv == 0.0 {
                            continue;
                        }
                        let row =
                            &mut out[layer.w_off + o * layer.fan_in..layer.w_off + (o + 1) * layer.fan_in];
                        for (rw, ra) in row.iter_mut().zip(&r_acts[l]) {
                            *rw += dv * ra;
                        }
                    }
                    let mut g = layer.back(params, &delta);
                    let mut rg = layer.back(v, &delta);
                    let wrd = layer.back(params, &r_delta);
                    for (a, b) in rg.iter_mut().zip(wrd) {
                        *a += b;
                    }
                    relu_mask(&fw.pre[l - 1], &mut g);
                    relu_mask(&fw.pre[l - 1], &mut rg);
                    delta = g;
                    r_delta = rg;
                }
            }
        }
    }
}

impl Layer {
    fn affine_no_bias(&self, params: &[f64], a: &[f64]) -> Vec<f64> {
        let w = self.weights(params);
        (0..self.fan_out)
            .map(|o| {
                let row = &w[o * self.fan_in..(o + 1) * self.fan_in];
                let mut s = 0.0;
                for (wi, ai) in row.iter().zip(a) {
                    s += wi * ai;
                }
                s
            })
            .collect()
    }
}
