//! Test-support: finite-difference probes and independent scalar oracles.
//!
//! Everything here deliberately avoids the tensor engine's compute paths
//! (plain loops over `Vec<f64>`), so tests that compare against these
//! helpers are checking two separate routes to the same quantity.

#![doc(hidden)]

use crate::element::Element;
use crate::recurrent::GruParams;
use crate::tensor::Tensor;

/// Relative error with an absolute floor for near-zero pairs.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        return (a - b).abs();
    }
    (a - b).abs() / scale
}

/// Central finite difference of `eval` w.r.t. one element of `param`.
/// The element is restored before returning.
pub fn finite_diff<T: Element>(
    param: &Tensor<T>,
    index: usize,
    step: f64,
    mut eval: impl FnMut() -> f64,
) -> f64 {
    let step = T::from_f64(step);
    let orig = param.data()[index];
    param.data_mut()[index] = orig + step;
    let plus = eval();
    param.data_mut()[index] = orig - step;
    let minus = eval();
    param.data_mut()[index] = orig;
    (plus - minus) / (2.0 * step.as_f64())
}

/// Central finite difference of `eval` along direction `dir` through all
/// of `param`'s elements at once.
pub fn finite_diff_directional<T: Element>(
    param: &Tensor<T>,
    dir: &[f64],
    step: f64,
    mut eval: impl FnMut() -> f64,
) -> f64 {
    assert_eq!(dir.len(), param.numel());
    let orig = param.to_vec();
    {
        let mut d = param.data_mut();
        for (v, (&o, &dv)) in d.iter_mut().zip(orig.iter().zip(dir)) {
            *v = o + T::from_f64(step * dv);
        }
    }
    let plus = eval();
    {
        let mut d = param.data_mut();
        for (v, (&o, &dv)) in d.iter_mut().zip(orig.iter().zip(dir)) {
            *v = o - T::from_f64(step * dv);
        }
    }
    let minus = eval();
    {
        let mut d = param.data_mut();
        for (v, &o) in d.iter_mut().zip(orig.iter()) {
            *v = o;
        }
    }
    (plus - minus) / (2.0 * step)
}

/// Deterministic spread of up to `max` element indices across a tensor.
pub fn probe_indices(numel: usize, max: usize) -> Vec<usize> {
    if numel <= max {
        return (0..numel).collect();
    }
    (0..max).map(|i| i * numel / max).collect()
}

/// GRU parameters flattened to plain slices for the scalar oracle.
pub struct GruScalarParams {
    pub d_in: usize,
    pub d_h: usize,
    pub d_out: usize,
    pub w_r: Vec<f64>,
    pub w_z: Vec<f64>,
    pub w_h: Vec<f64>,
    pub u_r: Vec<f64>,
    pub u_z: Vec<f64>,
    pub u_h: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_z: Vec<f64>,
    pub b_h: Vec<f64>,
    pub w_y: Vec<f64>,
    pub b_y: Vec<f64>,
}

impl GruScalarParams {
    pub fn from_params<T: Element>(p: &GruParams<T>) -> Self {
        let grab = |t: &Tensor<T>| t.to_vec().iter().map(|v| v.as_f64()).collect();
        GruScalarParams {
            d_in: p.d_in(),
            d_h: p.d_h(),
            d_out: p.d_out(),
            w_r: grab(&p.w_r),
            w_z: grab(&p.w_z),
            w_h: grab(&p.w_h),
            u_r: grab(&p.u_r),
            u_z: grab(&p.u_z),
            u_h: grab(&p.u_h),
            b_r: grab(&p.b_r),
            b_z: grab(&p.b_z),
            b_h: grab(&p.b_h),
            w_y: grab(&p.w_y),
            b_y: grab(&p.b_y),
        }
    }
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    for i in 0..rows {
        let mut acc = 0.0;
        for j in 0..cols {
            acc += w[i * cols + j] * x[j];
        }
        out[i] = acc;
    }
    out
}

fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar-loop evaluation of the gated recurrence (gates, candidate,
/// convex state update, readout). Independent of the tensor engine.
pub fn gru_step_scalar(p: &GruScalarParams, h_prev: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d_h = p.d_h;
    let wx_r = matvec(&p.w_r, d_h, p.d_in, x);
    let wx_z = matvec(&p.w_z, d_h, p.d_in, x);
    let wx_h = matvec(&p.w_h, d_h, p.d_in, x);
    let uh_r = matvec(&p.u_r, d_h, d_h, h_prev);
    let uh_z = matvec(&p.u_z, d_h, d_h, h_prev);
    let uh_h = matvec(&p.u_h, d_h, d_h, h_prev);

    let mut h = vec![0.0; d_h];
    for i in 0..d_h {
        let r = sigmoid_scalar(wx_r[i] + uh_r[i] + p.b_r[i]);
        let z = sigmoid_scalar(wx_z[i] + uh_z[i] + p.b_z[i]);
        let cand = (wx_h[i] + r * uh_h[i] + p.b_h[i]).tanh();
        h[i] = z * h_prev[i] + (1.0 - z) * cand;
    }
    let mut y = matvec(&p.w_y, p.d_out, d_h, &h);
    for (yi, &b) in y.iter_mut().zip(&p.b_y) {
        *yi += b;
    }
    (h, y)
}

/// Scalar evaluation of the plain recurrence h' = tanh(W_h x + U_h h + b_h),
/// y = W_y h' + b_y. Kept as an oracle for the degenerate-gate test only.
#[allow(clippy::too_many_arguments)]
pub fn vanilla_rnn_scalar(
    w_h: &[f64],
    u_h: &[f64],
    b_h: &[f64],
    w_y: &[f64],
    b_y: &[f64],
    d_h: usize,
    d_in: usize,
    d_out: usize,
    h_prev: &[f64],
    x: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let wx = matvec(w_h, d_h, d_in, x);
    let uh = matvec(u_h, d_h, d_h, h_prev);
    let mut h = vec![0.0; d_h];
    for i in 0..d_h {
        h[i] = (wx[i] + uh[i] + b_h[i]).tanh();
    }
    let mut y = matvec(w_y, d_out, d_h, &h);
    for (yi, &b) in y.iter_mut().zip(b_y) {
        *yi += b;
    }
    (h, y)
}
