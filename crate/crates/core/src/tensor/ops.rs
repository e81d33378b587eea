//! Forward primitives and the numeric kernels their backward passes share.

use super::tape::{Op, Tape, Var};
use super::{Result, Tensor, TensorError};

/// Spatial padding mode for [`Tape::conv2d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output extent `ceil(input / stride)`; the extra padding goes after.
    Same,
    /// No padding; output extent `(input - kernel) / stride + 1`.
    Valid,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Conv2dGeometry {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Conv2dGeometry {
    fn new(
        input: &[usize],
        kernel: &[usize],
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Self> {
        let mismatch = |detail: String| TensorError::ShapeMismatch {
            op: "conv2d",
            detail,
        };
        if input.len() != 3 || kernel.len() != 4 {
            return Err(mismatch(format!(
                "input {input:?} must be [C,H,W], kernel {kernel:?} must be [O,C,KH,KW]"
            )));
        }
        if input[0] != kernel[1] {
            return Err(mismatch(format!(
                "input channels {} vs kernel channels {}",
                input[0], kernel[1]
            )));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(mismatch("zero stride".into()));
        }
        let (h, w, kh, kw) = (input[1], input[2], kernel[2], kernel[3]);
        let extent = |n: usize, k: usize, s: usize| -> Result<(usize, usize)> {
            match padding {
                Padding::Same => {
                    let out = n.div_ceil(s);
                    let total = ((out.max(1) - 1) * s + k).saturating_sub(n);
                    Ok((out, total / 2))
                }
                Padding::Valid => {
                    if n < k {
                        return Err(mismatch(format!("extent {n} smaller than kernel {k}")));
                    }
                    Ok(((n - k) / s + 1, 0))
                }
            }
        };
        let (out_h, pad_top) = extent(h, kh, stride.0)?;
        let (out_w, pad_left) = extent(w, kw, stride.1)?;
        if out_h == 0 || out_w == 0 {
            return Err(mismatch(format!("empty output for input {input:?}")));
        }
        Ok(Conv2dGeometry {
            cin: input[0],
            h,
            w,
            cout: kernel[0],
            kh,
            kw,
            sh: stride.0,
            sw: stride.1,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    /// Output columns `ox` whose input column `ox*sw + kx - pad_left` is in bounds.
    fn ox_range(&self, kx: usize) -> std::ops::Range<usize> {
        let offset = kx as isize - self.pad_left as isize;
        let sw = self.sw as isize;
        let lo = if offset >= 0 { 0 } else { (-offset + sw - 1) / sw };
        let hi_ix = self.w as isize - 1 - offset;
        if hi_ix < 0 {
            return 0..0;
        }
        let hi = (hi_ix / sw + 1).min(self.out_w as isize);
        (lo as usize)..(hi.max(lo) as usize)
    }

    fn input_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.sh + ky) as isize - self.pad_top as isize;
        (iy >= 0 && (iy as usize) < self.h).then_some(iy as usize)
    }

    fn input_col(&self, ox: usize, kx: usize) -> usize {
        ox * self.sw + kx - self.pad_left
    }
}

pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (c, b) in crow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *c += av * b;
            }
        }
    }
    c
}

/// `g · bᵀ` for `g: m×n`, `b: k×n`.
pub(crate) fn matmul_nt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            out[i * k + p] = grow.iter().zip(&b[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · g` for `a: m×k`, `g: m×n`.
pub(crate) fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, g) in out[p * n..(p + 1) * n].iter_mut().zip(grow) {
                *o += av * g;
            }
        }
    }
    out
}

fn conv2d_forward(x: &[f64], k: &[f64], b: &[f64], geo: &Conv2dGeometry) -> Vec<f64> {
    let plane = geo.out_h * geo.out_w;
    let mut out = vec![0.0; geo.cout * plane];
    for co in 0..geo.cout {
        let oplane = &mut out[co * plane..(co + 1) * plane];
        oplane.fill(b[co]);
        for ci in 0..geo.cin {
            let xplane = &x[ci * geo.h * geo.w..(ci + 1) * geo.h * geo.w];
            for ky in 0..geo.kh {
                for kx in 0..geo.kw {
                    let kv = k[((co * geo.cin + ci) * geo.kh + ky) * geo.kw + kx];
                    let cols = geo.ox_range(kx);
                    for oy in 0..geo.out_h {
                        let Some(iy) = geo.input_row(oy, ky) else { continue };
                        let xrow = &xplane[iy * geo.w..(iy + 1) * geo.w];
                        let orow = &mut oplane[oy * geo.out_w..(oy + 1) * geo.out_w];
                        for ox in cols.clone() {
                            orow[ox] += kv * xrow[geo.input_col(ox, kx)];
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv2d_backward(
    x: &[f64],
    k: &[f64],
    g: &[f64],
    geo: &Conv2dGeometry,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let plane = geo.out_h * geo.out_w;
    let mut dx = vec![0.0; x.len()];
    let mut dk = vec![0.0; k.len()];
    let db = g.chunks(plane).map(|p| p.iter().sum()).collect();
    for co in 0..geo.cout {
        let gplane = &g[co * plane..(co + 1) * plane];
        for ci in 0..geo.cin {
            let base = ci * geo.h * geo.w;
            for ky in 0..geo.kh {
                for kx in 0..geo.kw {
                    let kidx = ((co * geo.cin + ci) * geo.kh + ky) * geo.kw + kx;
                    let kv = k[kidx];
                    let cols = geo.ox_range(kx);
                    let mut acc = 0.0;
                    for oy in 0..geo.out_h {
                        let Some(iy) = geo.input_row(oy, ky) else { continue };
                        let grow = &gplane[oy * geo.out_w..(oy + 1) * geo.out_w];
                        let row = base + iy * geo.w;
                        for ox in cols.clone() {
                            let ix = row + geo.input_col(ox, kx);
                            acc += grow[ox] * x[ix];
                            dx[ix] += grow[ox] * kv;
                        }
                    }
                    dk[kidx] += acc;
                }
            }
        }
    }
    (dx, dk, db)
}

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, inner)
}

/// Inverse of concatenation along `axis`: splits `data` into pieces shaped like `parts`.
pub(crate) fn split_axis(
    data: &[f64],
    shape: &[usize],
    parts: &[&[usize]],
    axis: usize,
) -> Vec<Vec<f64>> {
    let (outer, inner) = outer_inner(shape, axis);
    let mut out: Vec<Vec<f64>> = parts
        .iter()
        .map(|p| Vec::with_capacity(p.iter().product()))
        .collect();
    let mut offset = 0;
    for _ in 0..outer {
        for (piece, p) in out.iter_mut().zip(parts) {
            let chunk = p[axis] * inner;
            piece.extend_from_slice(&data[offset..offset + chunk]);
            offset += chunk;
        }
    }
    out
}

pub(crate) fn scatter_slice(
    g: &[f64],
    in_shape: &[usize],
    axis: usize,
    start: usize,
    len: usize,
) -> Vec<f64> {
    let (outer, inner) = outer_inner(in_shape, axis);
    let full = in_shape[axis] * inner;
    let mut dx = vec![0.0; in_shape.iter().product()];
    for o in 0..outer {
        let dst = o * full + start * inner;
        dx[dst..dst + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
    }
    dx
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    let symbols = x.len() / 2;
    x.iter().map(|v| v * v).sum::<f64>() / symbols as f64
}

pub(crate) fn power_normalize_backward(x: &[f64], g: &[f64]) -> Vec<f64> {
    let symbols = (x.len() / 2) as f64;
    let p = mean_power(x);
    let inv_sqrt = 1.0 / p.sqrt();
    let dot: f64 = g.iter().zip(x).map(|(g, x)| g * x).sum();
    let coef = dot * inv_sqrt / (p * symbols);
    g.iter().zip(x).map(|(g, x)| g * inv_sqrt - x * coef).collect()
}

/// Multiplies interleaved (re, im) pairs by the complex scalar `re + i·im`.
pub(crate) fn complex_scale(x: &[f64], re: f64, im: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for pair in x.chunks_exact(2) {
        out.push(re * pair[0] - im * pair[1]);
        out.push(im * pair[0] + re * pair[1]);
    }
    out
}

fn check_same(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(TensorError::ShapeMismatch {
            op,
            detail: format!("{a:?} vs {b:?}"),
        });
    }
    Ok(())
}

fn map_unary(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        shape: t.shape.clone(),
        data: t.data.iter().map(|&v| f(v)).collect(),
    }
}

fn zip_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

impl Tape {
    /// `[m,k] · [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                detail: format!("{sa:?} x {sb:?}"),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", Tensor::new(vec![m, n], data)?, Op::MatMul(a, b))
    }

    /// Adds a length-`n` bias to every row of an `[.., n]` tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb.len() != 1 || sx.last() != Some(&sb[0]) {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                detail: format!("{sx:?} + {sb:?}"),
            });
        }
        let n = sb[0];
        let mut out = self.value(x).clone();
        let b = self.value(bias).data();
        for row in out.data_mut().chunks_mut(n) {
            for (v, b) in row.iter_mut().zip(b) {
                *v += b;
            }
        }
        self.push("add_bias", out, Op::AddBias(x, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("add", self.shape(a), self.shape(b))?;
        let out = zip_binary(self.value(a), self.value(b), |x, y| x + y);
        self.push("add", out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("sub", self.shape(a), self.shape(b))?;
        let out = zip_binary(self.value(a), self.value(b), |x, y| x - y);
        self.push("sub", out, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same("mul", self.shape(a), self.shape(b))?;
        let out = zip_binary(self.value(a), self.value(b), |x, y| x * y);
        self.push("mul", out, Op::Mul(a, b))
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        let out = map_unary(self.value(x), |v| 1.0 - v);
        self.push("one_minus", out, Op::OneMinus(x))
    }

    /// Adds a constant tensor that carries no gradient (e.g. frozen channel noise).
    pub fn add_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        check_same("add_const", self.shape(x), c.shape())?;
        let out = zip_binary(self.value(x), c, |x, y| x + y);
        self.push("add_const", out, Op::AddConst(x))
    }

    /// 2-D cross-correlation of a `[C,H,W]` input with a `[O,C,KH,KW]` kernel plus per-filter bias.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Var> {
        let geom = Conv2dGeometry::new(self.shape(input), self.shape(kernel), stride, padding)?;
        if self.shape(bias) != [geom.cout] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                detail: format!("bias {:?} for {} filters", self.shape(bias), geom.cout),
            });
        }
        let data = conv2d_forward(
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
            &geom,
        );
        let out = Tensor::new(vec![geom.cout, geom.out_h, geom.out_w], data)?;
        self.push(
            "conv2d",
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = map_unary(self.value(x), |v| v.max(0.0));
        self.push("relu", out, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = map_unary(self.value(x), f64::tanh);
        self.push("tanh", out, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = map_unary(self.value(x), sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(x))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let mut out = self.value(x).clone();
        let width = *out.shape().last().ok_or(TensorError::ShapeMismatch {
            op: "softmax",
            detail: "scalar input".into(),
        })?;
        for row in out.data_mut().chunks_mut(width) {
            softmax_in_place(row);
        }
        self.push("softmax", out, Op::Softmax(x))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let mut out = self.value(x).clone();
        let width = *out.shape().last().ok_or(TensorError::ShapeMismatch {
            op: "log_softmax",
            detail: "scalar input".into(),
        })?;
        for row in out.data_mut().chunks_mut(width) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push("log_softmax", out, Op::LogSoftmax(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape.to_vec())?;
        self.push("reshape", out, Op::Reshape(x))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or(TensorError::ShapeMismatch {
            op: "concat",
            detail: "no inputs".into(),
        })?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                detail: format!("axis {axis} for rank {}", base.len()),
            });
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    detail: format!("{base:?} vs {s:?} on axis {axis}"),
                });
            }
            total += s[axis];
        }
        let (outer, inner) = outer_inner(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let out = Tensor::new(shape, data)?;
        self.push(
            "concat",
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        )
    }

    /// `len` consecutive entries starting at `start` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "slice",
                detail: format!("[{start}, {}) on axis {axis} of {shape:?}", start + len),
            });
        }
        let (outer, inner) = outer_inner(&shape, axis);
        let full = shape[axis] * inner;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = o * full + start * inner;
            data.extend_from_slice(&src[from..from + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let out = Tensor::new(out_shape, data)?;
        self.push("slice", out, Op::Slice { input: x, axis, start })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        self.push("sum_squares", Tensor::scalar(s), Op::SumSquares(x))
    }

    /// Treats the data as interleaved (re, im) pairs and scales to unit mean symbol power.
    pub fn power_normalize(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if !t.len().is_multiple_of(2) || t.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "power_normalize",
                detail: format!("{} reals do not form complex pairs", t.len()),
            });
        }
        let p = mean_power(t.data());
        if p <= 0.0 {
            return Err(TensorError::Degenerate {
                op: "power_normalize",
                detail: "all-zero symbols".into(),
            });
        }
        let scale = 1.0 / p.sqrt();
        let out = map_unary(t, |v| v * scale);
        self.push("power_normalize", out, Op::PowerNormalize(x))
    }

    /// Multiplies interleaved (re, im) pairs by a fixed complex scalar.
    pub fn complex_scale(&mut self, x: Var, re: f64, im: f64) -> Result<Var> {
        let t = self.value(x);
        if !t.len().is_multiple_of(2) {
            return Err(TensorError::ShapeMismatch {
                op: "complex_scale",
                detail: format!("{} reals do not form complex pairs", t.len()),
            });
        }
        let out = Tensor {
            shape: t.shape.clone(),
            data: complex_scale(t.data(), re, im),
        };
        self.push("complex_scale", out, Op::ComplexScale { input: x, re, im })
    }

    /// Records a scalar computed outside the tape together with its gradient w.r.t. `input`.
    pub fn external_loss(&mut self, input: Var, value: f64, grad: Tensor) -> Result<Var> {
        check_same("external_loss", self.shape(input), grad.shape())?;
        if !grad.is_finite() {
            return Err(TensorError::NonFinite { op: "external_loss" });
        }
        self.push("external_loss", Tensor::scalar(value), Op::External { input, grad })
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
