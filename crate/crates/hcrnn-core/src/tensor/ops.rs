//! Forward ops and their backward rules.
//!
//! Every op validates shapes, rejects non-finite outputs, and (on a
//! recording tape, when any input needs gradients) pushes one backward
//! rule. Convolution lowers to im2col + gemm; all dense products funnel
//! through the three gemm kernels at the top of this file.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::{check_finite, Tape, Tensor};

/// c[m×n] += a[m×k] · b[k×n]
pub(crate) fn gemm_nn<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = *cv + a_ip * bv;
            }
        }
    }
}

/// c[m×n] += a[m×k] · b[n×k]ᵀ
pub(crate) fn gemm_nt<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (j, cv) in c_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc = acc + av * bv;
            }
            *cv = *cv + acc;
        }
    }
}

/// c[k×n] += a[m×k]ᵀ · b[m×n]
pub(crate) fn gemm_tn<T: Element>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let c_row = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = *cv + a_ip * bv;
            }
        }
    }
}

fn im2col<T: Element>(
    x: &[T],
    (c, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
    col: &mut [T],
) {
    debug_assert_eq!(col.len(), c * kh * kw * oh * ow);
    let mut r = 0;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                for i in 0..oh {
                    let ih = (i * stride + ki) as isize - pad as isize;
                    let dst = &mut col[r * oh * ow + i * ow..r * oh * ow + (i + 1) * ow];
                    if ih < 0 || ih >= h as isize {
                        for v in dst.iter_mut() {
                            *v = T::zero();
                        }
                        continue;
                    }
                    let row = &plane[ih as usize * w..(ih as usize + 1) * w];
                    for (j, v) in dst.iter_mut().enumerate() {
                        let iw = (j * stride + kj) as isize - pad as isize;
                        *v = if iw >= 0 && iw < w as isize {
                            row[iw as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
                r += 1;
            }
        }
    }
}

fn col2im_acc<T: Element>(
    col: &[T],
    (c, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
    gx: &mut [T],
) {
    let mut r = 0;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                for i in 0..oh {
                    let ih = (i * stride + ki) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let src = &col[r * oh * ow + i * ow..r * oh * ow + (i + 1) * ow];
                    let base = ci * h * w + ih as usize * w;
                    for (j, &v) in src.iter().enumerate() {
                        let iw = (j * stride + kj) as isize - pad as isize;
                        if iw >= 0 && iw < w as isize {
                            gx[base + iw as usize] = gx[base + iw as usize] + v;
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

fn same_shape<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(
            op,
            format!("shapes {:?} and {:?} differ", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

/// Splits a shape at `axis` into (outer, len, inner) block extents.
fn axis_blocks(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Batch-norm mode selector.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BnMode {
    Train,
    Infer,
}

impl<T: Element> Tape<T> {
    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        if a.shape().len() != 2 || b.shape().len() != 2 {
            return Err(Error::dim("matmul", "both operands must be rank 2".to_string()));
        }
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let (k2, n) = (b.shape()[0], b.shape()[1]);
        if k != k2 {
            return Err(Error::dim(
                "matmul",
                format!("inner extents differ: {}x{} vs {}x{}", m, k, k2, n),
            ));
        }
        let mut out = vec![T::zero(); m * n];
        gemm_nn(m, k, n, &a.data(), &b.data(), &mut out);
        check_finite("matmul", &out)?;
        let track = self.track(a.needs_grad() || b.needs_grad());
        let result = Tensor::result(vec![m, n], out, track);
        if track {
            let (a, b) = (a.clone(), b.clone());
            self.push(&result, move |g| {
                if a.needs_grad() {
                    let mut ga = vec![T::zero(); m * k];
                    gemm_nt(m, n, k, g, &b.data(), &mut ga);
                    a.accumulate_grad(&ga);
                }
                if b.needs_grad() {
                    let mut gb = vec![T::zero(); k * n];
                    gemm_tn(m, k, n, &a.data(), g, &mut gb);
                    b.accumulate_grad(&gb);
                }
            });
        }
        Ok(result)
    }

    fn affine(
        &self,
        op: &'static str,
        x: &Tensor<T>,
        w: &Tensor<T>,
        bias: Option<&Tensor<T>>,
    ) -> Result<Tensor<T>> {
        if w.shape().len() != 2 {
            return Err(Error::dim(op, "weight must be rank 2 (out x in)".to_string()));
        }
        let (d_out, d_in) = (w.shape()[0], w.shape()[1]);
        let (batch, vector_input) = match x.shape() {
            [d] if *d == d_in => (1, true),
            [b, d] if *d == d_in => (*b, false),
            other => {
                return Err(Error::dim(
                    op,
                    format!("input shape {:?} incompatible with weight {}x{}", other, d_out, d_in),
                ))
            }
        };
        if let Some(b) = bias {
            if b.shape() != [d_out] {
                return Err(Error::dim(
                    op,
                    format!("bias shape {:?}, expected [{}]", b.shape(), d_out),
                ));
            }
        }
        let mut out = vec![T::zero(); batch * d_out];
        gemm_nt(batch, d_in, d_out, &x.data(), &w.data(), &mut out);
        if let Some(b) = bias {
            let bd = b.data();
            for row in out.chunks_exact_mut(d_out) {
                for (o, &bv) in row.iter_mut().zip(bd.iter()) {
                    *o = *o + bv;
                }
            }
        }
        check_finite(op, &out)?;
        let needs = x.needs_grad()
            || w.needs_grad()
            || bias.map(|b| b.needs_grad()).unwrap_or(false);
        let track = self.track(needs);
        let shape = if vector_input { vec![d_out] } else { vec![batch, d_out] };
        let result = Tensor::result(shape, out, track);
        if track {
            let (x, w, bias) = (x.clone(), w.clone(), bias.cloned());
            self.push(&result, move |g| {
                if x.needs_grad() {
                    let mut gx = vec![T::zero(); batch * d_in];
                    gemm_nn(batch, d_out, d_in, g, &w.data(), &mut gx);
                    x.accumulate_grad(&gx);
                }
                if w.needs_grad() {
                    let mut gw = vec![T::zero(); d_out * d_in];
                    gemm_tn(batch, d_out, d_in, g, &x.data(), &mut gw);
                    w.accumulate_grad(&gw);
                }
                if let Some(b) = &bias {
                    if b.needs_grad() {
                        let mut gb = vec![T::zero(); d_out];
                        for row in g.chunks_exact(d_out) {
                            for (acc, &gv) in gb.iter_mut().zip(row) {
                                *acc = *acc + gv;
                            }
                        }
                        b.accumulate_grad(&gb);
                    }
                }
            });
        }
        Ok(result)
    }

    /// `x · Wᵀ` without bias, for recurrent state paths.
    pub fn linear(&self, x: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
        self.affine("linear", x, w, None)
    }

    /// `x · Wᵀ + b`; the bias broadcasts over the batch dimension.
    pub fn fully_connected(&self, x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        self.affine("fully_connected", x, w, Some(b))
    }

    /// 2D cross-correlation plus bias over a `[C,H,W]` or `[N,C,H,W]` input,
    /// kernel `[O,C,kh,kw]`.
    pub fn conv2d(
        &self,
        x: &Tensor<T>,
        kernel: &Tensor<T>,
        bias: &Tensor<T>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<T>> {
        let (batched, n, c, h, w) = match x.shape() {
            [c, h, w] => (false, 1, *c, *h, *w),
            [n, c, h, w] => (true, *n, *c, *h, *w),
            other => {
                return Err(Error::dim("conv2d", format!("input must be rank 3 or 4, got {:?}", other)))
            }
        };
        let [o, ci, kh, kw] = match kernel.shape() {
            [o, ci, kh, kw] => [*o, *ci, *kh, *kw],
            other => {
                return Err(Error::dim("conv2d", format!("kernel must be rank 4, got {:?}", other)))
            }
        };
        if ci != c {
            return Err(Error::dim(
                "conv2d",
                format!("kernel expects {} input channels, input has {}", ci, c),
            ));
        }
        if bias.shape() != [o] {
            return Err(Error::dim(
                "conv2d",
                format!("bias shape {:?}, expected [{}]", bias.shape(), o),
            ));
        }
        if stride == 0 {
            return Err(Error::dim("conv2d", "stride must be positive".to_string()));
        }
        let span_h = h as isize + 2 * padding as isize - kh as isize;
        let span_w = w as isize + 2 * padding as isize - kw as isize;
        if span_h < 0 || span_w < 0 || span_h as usize % stride != 0 || span_w as usize % stride != 0 {
            return Err(Error::dim(
                "conv2d",
                format!(
                    "non-integral output extent for input {}x{}, kernel {}x{}, stride {}, padding {}",
                    h, w, kh, kw, stride, padding
                ),
            ));
        }
        let oh = span_h as usize / stride + 1;
        let ow = span_w as usize / stride + 1;

        let ckk = c * kh * kw;
        let plane = oh * ow;
        let mut out = vec![T::zero(); n * o * plane];
        {
            let xd = x.data();
            let kd = kernel.data();
            let bd = bias.data();
            let mut col = vec![T::zero(); ckk * plane];
            for s in 0..n {
                let xs = &xd[s * c * h * w..(s + 1) * c * h * w];
                im2col(xs, (c, h, w), (kh, kw), stride, padding, (oh, ow), &mut col);
                let os = &mut out[s * o * plane..(s + 1) * o * plane];
                gemm_nn(o, ckk, plane, &kd, &col, os);
                for (oc, row) in os.chunks_exact_mut(plane).enumerate() {
                    let bv = bd[oc];
                    for v in row.iter_mut() {
                        *v = *v + bv;
                    }
                }
            }
        }
        check_finite("conv2d", &out)?;
        let needs = x.needs_grad() || kernel.needs_grad() || bias.needs_grad();
        let track = self.track(needs);
        let shape = if batched { vec![n, o, oh, ow] } else { vec![o, oh, ow] };
        let result = Tensor::result(shape, out, track);
        if track {
            let (x, kernel, bias) = (x.clone(), kernel.clone(), bias.clone());
            self.push(&result, move |g| {
                let xd = x.data();
                let kd = kernel.data();
                let mut col = vec![T::zero(); ckk * plane];
                let mut gx = if x.needs_grad() {
                    vec![T::zero(); n * c * h * w]
                } else {
                    Vec::new()
                };
                let mut gk = if kernel.needs_grad() {
                    vec![T::zero(); o * ckk]
                } else {
                    Vec::new()
                };
                let mut gcol = vec![T::zero(); ckk * plane];
                for s in 0..n {
                    let gs = &g[s * o * plane..(s + 1) * o * plane];
                    if kernel.needs_grad() {
                        let xs = &xd[s * c * h * w..(s + 1) * c * h * w];
                        im2col(xs, (c, h, w), (kh, kw), stride, padding, (oh, ow), &mut col);
                        gemm_nt(o, plane, ckk, gs, &col, &mut gk);
                    }
                    if x.needs_grad() {
                        for v in gcol.iter_mut() {
                            *v = T::zero();
                        }
                        gemm_tn(o, ckk, plane, &kd, gs, &mut gcol);
                        col2im_acc(
                            &gcol,
                            (c, h, w),
                            (kh, kw),
                            stride,
                            padding,
                            (oh, ow),
                            &mut gx[s * c * h * w..(s + 1) * c * h * w],
                        );
                    }
                }
                if x.needs_grad() {
                    x.accumulate_grad(&gx);
                }
                if kernel.needs_grad() {
                    kernel.accumulate_grad(&gk);
                }
                if bias.needs_grad() {
                    let mut gb = vec![T::zero(); o];
                    for s in 0..n {
                        for (oc, acc) in gb.iter_mut().enumerate() {
                            let row = &g[(s * o + oc) * plane..(s * o + oc + 1) * plane];
                            let mut sum = T::zero();
                            for &v in row {
                                sum = sum + v;
                            }
                            *acc = *acc + sum;
                        }
                    }
                    bias.accumulate_grad(&gb);
                }
            });
        }
        Ok(result)
    }

    /// Mean over non-overlapping 2×2 windows; spatial extents must be even.
    pub fn avg_pool2d(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (batched, n, c, h, w) = match x.shape() {
            [c, h, w] => (false, 1, *c, *h, *w),
            [n, c, h, w] => (true, *n, *c, *h, *w),
            other => {
                return Err(Error::dim("avg_pool2d", format!("input must be rank 3 or 4, got {:?}", other)))
            }
        };
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::dim(
                "avg_pool2d",
                format!("spatial extents must be even, got {}x{}", h, w),
            ));
        }
        let (oh, ow) = (h / 2, w / 2);
        let quarter = T::from_f64(0.25);
        let mut out = vec![T::zero(); n * c * oh * ow];
        {
            let xd = x.data();
            for p in 0..n * c {
                let src = &xd[p * h * w..(p + 1) * h * w];
                let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
                for i in 0..oh {
                    for j in 0..ow {
                        let a = src[2 * i * w + 2 * j];
                        let b = src[2 * i * w + 2 * j + 1];
                        let c2 = src[(2 * i + 1) * w + 2 * j];
                        let d = src[(2 * i + 1) * w + 2 * j + 1];
                        dst[i * ow + j] = (a + b + c2 + d) * quarter;
                    }
                }
            }
        }
        check_finite("avg_pool2d", &out)?;
        let track = self.track(x.needs_grad());
        let shape = if batched { vec![n, c, oh, ow] } else { vec![c, oh, ow] };
        let result = Tensor::result(shape, out, track);
        if track {
            let x = x.clone();
            self.push(&result, move |g| {
                let mut gx = vec![T::zero(); n * c * h * w];
                for p in 0..n * c {
                    let gsrc = &g[p * oh * ow..(p + 1) * oh * ow];
                    let gdst = &mut gx[p * h * w..(p + 1) * h * w];
                    for i in 0..oh {
                        for j in 0..ow {
                            let share = gsrc[i * ow + j] * quarter;
                            gdst[2 * i * w + 2 * j] = gdst[2 * i * w + 2 * j] + share;
                            gdst[2 * i * w + 2 * j + 1] = gdst[2 * i * w + 2 * j + 1] + share;
                            gdst[(2 * i + 1) * w + 2 * j] = gdst[(2 * i + 1) * w + 2 * j] + share;
                            gdst[(2 * i + 1) * w + 2 * j + 1] =
                                gdst[(2 * i + 1) * w + 2 * j + 1] + share;
                        }
                    }
                }
                x.accumulate_grad(&gx);
            });
        }
        Ok(result)
    }

    /// Per-channel spatial mean: `[C,H,W] -> [C]` or `[N,C,H,W] -> [N,C]`.
    pub fn global_avg_pool(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (batched, n, c, h, w) = match x.shape() {
            [c, h, w] => (false, 1, *c, *h, *w),
            [n, c, h, w] => (true, *n, *c, *h, *w),
            other => {
                return Err(Error::dim(
                    "global_avg_pool",
                    format!("input must be rank 3 or 4, got {:?}", other),
                ))
            }
        };
        let area = h * w;
        let inv = T::one() / T::from_f64(area as f64);
        let mut out = vec![T::zero(); n * c];
        {
            let xd = x.data();
            for (p, slot) in out.iter_mut().enumerate() {
                let src = &xd[p * area..(p + 1) * area];
                let mut sum = T::zero();
                for &v in src {
                    sum = sum + v;
                }
                *slot = sum * inv;
            }
        }
        check_finite("global_avg_pool", &out)?;
        let track = self.track(x.needs_grad());
        let shape = if batched { vec![n, c] } else { vec![c] };
        let result = Tensor::result(shape, out, track);
        if track {
            let x = x.clone();
            self.push(&result, move |g| {
                let mut gx = vec![T::zero(); n * c * area];
                for (p, &gv) in g.iter().enumerate() {
                    let share = gv * inv;
                    for slot in gx[p * area..(p + 1) * area].iter_mut() {
                        *slot = share;
                    }
                }
                x.accumulate_grad(&gx);
            });
        }
        Ok(result)
    }

    fn unary(
        &self,
        op: &'static str,
        x: &Tensor<T>,
        f: impl Fn(T) -> T,
        df_from_in_out: impl Fn(T, T) -> T + 'static,
    ) -> Result<Tensor<T>> {
        let out: Vec<T> = x.data().iter().map(|&v| f(v)).collect();
        check_finite(op, &out)?;
        let track = self.track(x.needs_grad());
        let result = Tensor::result(x.shape().to_vec(), out, track);
        if track {
            let x = x.clone();
            let y = result.clone();
            self.push(&result, move |g| {
                let xd = x.data();
                let yd = y.data();
                let gx: Vec<T> = g
                    .iter()
                    .zip(xd.iter().zip(yd.iter()))
                    .map(|(&gv, (&xv, &yv))| gv * df_from_in_out(xv, yv))
                    .collect();
                x.accumulate_grad(&gx);
            });
        }
        Ok(result)
    }

    pub fn relu(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.unary(
            "relu",
            x,
            |v| if v > T::zero() { v } else { T::zero() },
            |xv, _| if xv > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.unary(
            "sigmoid",
            x,
            |v| T::one() / (T::one() + (-v).exp()),
            |_, yv| yv * (T::one() - yv),
        )
    }

    pub fn tanh(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.unary("tanh", x, |v| v.tanh(), |_, yv| T::one() - yv * yv)
    }

    pub fn add(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("add", a, b)?;
        let out: Vec<T> = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x + y).collect();
        check_finite("add", &out)?;
        let track = self.track(a.needs_grad() || b.needs_grad());
        let result = Tensor::result(a.shape().to_vec(), out, track);
        if track {
            let (a, b) = (a.clone(), b.clone());
            self.push(&result, move |g| {
                if a.needs_grad() {
                    a.accumulate_grad(g);
                }
                if b.needs_grad() {
                    b.accumulate_grad(g);
                }
            });
        }
        Ok(result)
    }

    pub fn sub(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("sub", a, b)?;
        let out: Vec<T> = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x - y).collect();
        check_finite("sub", &out)?;
        let track = self.track(a.needs_grad() || b.needs_grad());
        let result = Tensor::result(a.shape().to_vec(), out, track);
        if track {
            let (a, b) = (a.clone(), b.clone());
            self.push(&result, move |g| {
                if a.needs_grad() {
                    a.accumulate_grad(g);
                }
                if b.needs_grad() {
                    let neg: Vec<T> = g.iter().map(|&v| -v).collect();
                    b.accumulate_grad(&neg);
                }
            });
        }
        Ok(result)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("mul", a, b)?;
        let out: Vec<T> = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x * y).collect();
        check_finite("mul", &out)?;
        let track = self.track(a.needs_grad() || b.needs_grad());
        let result = Tensor::result(a.shape().to_vec(), out, track);
        if track {
            let (a, b) = (a.clone(), b.clone());
            self.push(&result, move |g| {
                if a.needs_grad() {
                    let ga: Vec<T> = g.iter().zip(b.data().iter()).map(|(&gv, &bv)| gv * bv).collect();
                    a.accumulate_grad(&ga);
                }
                if b.needs_grad() {
                    let gb: Vec<T> = g.iter().zip(a.data().iter()).map(|(&gv, &av)| gv * av).collect();
                    b.accumulate_grad(&gb);
                }
            });
        }
        Ok(result)
    }

    /// Multiplication by a compile-time constant (not a tape input).
    pub fn scale(&self, x: &Tensor<T>, factor: T) -> Result<Tensor<T>> {
        let out: Vec<T> = x.data().iter().map(|&v| v * factor).collect();
        check_finite("scale", &out)?;
        let track = self.track(x.needs_grad());
        let result = Tensor::result(x.shape().to_vec(), out, track);
        if track {
            let x = x.clone();
            self.push(&result, move |g| {
                let gx: Vec<T> = g.iter().map(|&v| v * factor).collect();
                x.accumulate_grad(&gx);
            });
        }
        Ok(result)
    }

    /// Concatenates tensors of identical rank along `axis`; all other
    /// extents must match.
    pub fn concat(&self, parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(Error::Usage("concat of zero tensors".into()));
        }
        let rank = parts[0].shape().len();
        if axis >= rank {
            return Err(Error::dim("concat", format!("axis {} out of rank {}", axis, rank)));
        }
        for p in parts {
            if p.shape().len() != rank {
                return Err(Error::dim("concat", "rank mismatch".to_string()));
            }
            for (d, (&ea, &eb)) in parts[0].shape().iter().zip(p.shape().iter()).enumerate() {
                if d != axis && ea != eb {
                    return Err(Error::dim(
                        "concat",
                        format!("extent mismatch at dim {}: {:?} vs {:?}", d, parts[0].shape(), p.shape()),
                    ));
                }
            }
        }
        let mut shape = parts[0].shape().to_vec();
        shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
        let (outer, total_axis, inner) = axis_blocks(&shape, axis);
        let mut out = vec![T::zero(); outer * total_axis * inner];
        let mut offset = 0;
        for p in parts {
            let len = p.shape()[axis];
            let pd = p.data();
            for oi in 0..outer {
                let src = &pd[oi * len * inner..(oi + 1) * len * inner];
                let dst_start = (oi * total_axis + offset) * inner;
                out[dst_start..dst_start + len * inner].copy_from_slice(src);
            }
            offset += len;
        }
        check_finite("concat", &out)?;
        let needs = parts.iter().any(|p| p.needs_grad());
        let track = self.track(needs);
        let result = Tensor::result(shape, out, track);
        if track {
            let parts: Vec<Tensor<T>> = parts.iter().map(|&p| p.clone()).collect();
            self.push(&result, move |g| {
                let mut offset = 0;
                for p in &parts {
                    let len = p.shape()[axis];
                    if p.needs_grad() {
                        let mut gp = vec![T::zero(); outer * len * inner];
                        for oi in 0..outer {
                            let src_start = (oi * total_axis + offset) * inner;
                            gp[oi * len * inner..(oi + 1) * len * inner]
                                .copy_from_slice(&g[src_start..src_start + len * inner]);
                        }
                        p.accumulate_grad(&gp);
                    }
                    offset += len;
                }
            });
        }
        Ok(result)
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut total = T::zero();
        for &v in x.data().iter() {
            total = total + v;
        }
        check_finite("sum", &[total])?;
        let track = self.track(x.needs_grad());
        let result = Tensor::result(Vec::new(), vec![total], track);
        if track {
            let x = x.clone();
            self.push(&result, move |g| {
                let gx = vec![g[0]; x.numel()];
                x.accumulate_grad(&gx);
            });
        }
        Ok(result)
    }

    /// Batch normalization over `[N,C,H,W]` with per-channel affine
    /// parameters. Train mode normalizes by batch statistics (biased
    /// variance) and updates the running buffers in place; infer mode
    /// normalizes by the running buffers.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &self,
        x: &Tensor<T>,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
        running_mean: &Tensor<T>,
        running_var: &Tensor<T>,
        eps: T,
        momentum: T,
        mode: BnMode,
    ) -> Result<Tensor<T>> {
        let [n, c, h, w] = match x.shape() {
            [n, c, h, w] => [*n, *c, *h, *w],
            other => {
                return Err(Error::dim("batch_norm", format!("input must be rank 4, got {:?}", other)))
            }
        };
        for (name, t) in [("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)] {
            if t.shape() != [c] {
                return Err(Error::dim(
                    "batch_norm",
                    format!("{} shape {:?}, expected [{}]", name, t.shape(), c),
                ));
            }
        }
        if mode == BnMode::Train && n < 2 {
            return Err(Error::Config(
                "batch_norm in train mode requires a batch of at least 2".into(),
            ));
        }
        let area = h * w;
        let m = n * area;
        let inv_m = T::one() / T::from_f64(m as f64);

        let (mean, inv_std) = match mode {
            BnMode::Train => {
                let xd = x.data();
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ci in 0..c {
                    let mut sum = T::zero();
                    for s in 0..n {
                        let plane = &xd[(s * c + ci) * area..(s * c + ci + 1) * area];
                        for &v in plane {
                            sum = sum + v;
                        }
                    }
                    let mu = sum * inv_m;
                    let mut ss = T::zero();
                    for s in 0..n {
                        let plane = &xd[(s * c + ci) * area..(s * c + ci + 1) * area];
                        for &v in plane {
                            let d = v - mu;
                            ss = ss + d * d;
                        }
                    }
                    mean[ci] = mu;
                    var[ci] = ss * inv_m;
                }
                drop(xd);
                {
                    let mut rm = running_mean.data_mut();
                    let mut rv = running_var.data_mut();
                    let keep = momentum;
                    let take = T::one() - momentum;
                    for ci in 0..c {
                        rm[ci] = rm[ci] * keep + mean[ci] * take;
                        rv[ci] = rv[ci] * keep + var[ci] * take;
                    }
                }
                let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                (mean, inv_std)
            }
            BnMode::Infer => {
                let mean = running_mean.to_vec();
                let inv_std: Vec<T> =
                    running_var.data().iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                (mean, inv_std)
            }
        };

        let mut xhat = vec![T::zero(); n * c * area];
        let mut out = vec![T::zero(); n * c * area];
        {
            let xd = x.data();
            let gd = gamma.data();
            let bd = beta.data();
            for s in 0..n {
                for ci in 0..c {
                    let base = (s * c + ci) * area;
                    let (mu, istd, ga, be) = (mean[ci], inv_std[ci], gd[ci], bd[ci]);
                    for k in 0..area {
                        let xh = (xd[base + k] - mu) * istd;
                        xhat[base + k] = xh;
                        out[base + k] = ga * xh + be;
                    }
                }
            }
        }
        check_finite("batch_norm", &out)?;
        let needs = x.needs_grad() || gamma.needs_grad() || beta.needs_grad();
        let track = self.track(needs);
        let result = Tensor::result(vec![n, c, h, w], out, track);
        if track {
            let (x, gamma, beta) = (x.clone(), gamma.clone(), beta.clone());
            let inv_std_saved = inv_std;
            self.push(&result, move |g| {
                let gd = gamma.data();
                if beta.needs_grad() || gamma.needs_grad() {
                    let mut gbeta = vec![T::zero(); c];
                    let mut ggamma = vec![T::zero(); c];
                    for s in 0..n {
                        for ci in 0..c {
                            let base = (s * c + ci) * area;
                            let mut sg = T::zero();
                            let mut sgx = T::zero();
                            for k in 0..area {
                                sg = sg + g[base + k];
                                sgx = sgx + g[base + k] * xhat[base + k];
                            }
                            gbeta[ci] = gbeta[ci] + sg;
                            ggamma[ci] = ggamma[ci] + sgx;
                        }
                    }
                    if gamma.needs_grad() {
                        gamma.accumulate_grad(&ggamma);
                    }
                    if beta.needs_grad() {
                        beta.accumulate_grad(&gbeta);
                    }
                }
                if x.needs_grad() {
                    let mut gx = vec![T::zero(); n * c * area];
                    match mode {
                        BnMode::Train => {
                            // d/dx of the batch-stat normalization chain:
                            // gx = γ·istd·(g − mean(g) − x̂·mean(g·x̂)), means over N·H·W.
                            for ci in 0..c {
                                let mut sg = T::zero();
                                let mut sgx = T::zero();
                                for s in 0..n {
                                    let base = (s * c + ci) * area;
                                    for k in 0..area {
                                        sg = sg + g[base + k];
                                        sgx = sgx + g[base + k] * xhat[base + k];
                                    }
                                }
                                let mg = sg * inv_m;
                                let mgx = sgx * inv_m;
                                let coeff = gd[ci] * inv_std_saved[ci];
                                for s in 0..n {
                                    let base = (s * c + ci) * area;
                                    for k in 0..area {
                                        gx[base + k] =
                                            coeff * (g[base + k] - mg - xhat[base + k] * mgx);
                                    }
                                }
                            }
                        }
                        BnMode::Infer => {
                            for ci in 0..c {
                                let coeff = gd[ci] * inv_std_saved[ci];
                                for s in 0..n {
                                    let base = (s * c + ci) * area;
                                    for k in 0..area {
                                        gx[base + k] = coeff * g[base + k];
                                    }
                                }
                            }
                        }
                    }
                    x.accumulate_grad(&gx);
                }
            });
        }
        Ok(result)
    }

    /// Sum of the robust piecewise loss over all components of
    /// `pred − target`: quadratic inside `|d| < 0.01`, linear outside.
    pub fn smooth_l1_sum(&self, pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("smooth_l1_sum", pred, target)?;
        let delta = T::from_f64(crate::model::SMOOTH_L1_DELTA);
        let half = T::from_f64(0.5);
        let mut total = T::zero();
        {
            let pd = pred.data();
            let td = target.data();
            for (&p, &t) in pd.iter().zip(td.iter()) {
                let d = p - t;
                let a = d.abs();
                total = total
                    + if a < delta {
                        half * d * d
                    } else {
                        delta * (a - half * delta)
                    };
            }
        }
        check_finite("smooth_l1_sum", &[total])?;
        let track = self.track(pred.needs_grad() || target.needs_grad());
        let result = Tensor::result(Vec::new(), vec![total], track);
        if track {
            let (pred, target) = (pred.clone(), target.clone());
            self.push(&result, move |g| {
                let pd = pred.data();
                let td = target.data();
                let gp: Vec<T> = pd
                    .iter()
                    .zip(td.iter())
                    .map(|(&p, &t)| {
                        let d = p - t;
                        let slope = if d.abs() < delta {
                            d
                        } else if d > T::zero() {
                            delta
                        } else {
                            -delta
                        };
                        g[0] * slope
                    })
                    .collect();
                drop(pd);
                drop(td);
                if pred.needs_grad() {
                    pred.accumulate_grad(&gp);
                }
                if target.needs_grad() {
                    let gt: Vec<T> = gp.iter().map(|&v| -v).collect();
                    target.accumulate_grad(&gt);
                }
            });
        }
        Ok(result)
    }
}
