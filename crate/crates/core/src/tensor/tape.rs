use super::ops::{self, Conv2dGeometry};
use super::params::{Gradients, ParameterSet};
use super::{Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
pub(crate) enum Op {
    Constant,
    Param(String),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    AddConst(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: Conv2dGeometry,
    },
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Reshape(Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    Sum(Var),
    SumSquares(Var),
    PowerNormalize(Var),
    ComplexScale {
        input: Var,
        re: f64,
        im: f64,
    },
    /// Scalar loss whose gradient w.r.t. `input` was computed during the forward pass.
    External {
        input: Var,
        grad: Tensor,
    },
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
}

/// Append-only record of executed primitives, in topological order.
#[derive(Debug, Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub(crate) fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push("constant", value, Op::Constant)
    }

    /// Records the named parameter from `params`; gradients flow back to that name.
    pub fn param(&mut self, params: &ParameterSet, name: &str) -> Result<Var> {
        let value = params
            .get(name)
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))?
            .clone();
        self.push("param", value, Op::Param(name.to_string()))
    }

    /// Reverse pass from the scalar `loss`. Parameters of `params` that the
    /// loss does not reach receive zero gradients.
    pub fn backward(&self, loss: Var, params: &ParameterSet) -> Result<Gradients> {
        let loss_shape = self.shape(loss);
        if self.value(loss).len() != 1 {
            return Err(TensorError::NotScalar(loss_shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(loss_shape, 1.0));
        let mut out = Gradients::zeros_like(params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(name) => out.accumulate(name, &g)?,
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    let da = ops::matmul_nt(g.data(), bv.data(), m, n, k);
                    let db = ops::matmul_tn(av.data(), g.data(), m, k, n);
                    accumulate(&mut grads, *a, da, av.shape());
                    accumulate(&mut grads, *b, db, bv.shape());
                }
                Op::AddBias(x, b) => {
                    let cols = self.shape(*b)[0];
                    let mut db = vec![0.0; cols];
                    for row in g.data().chunks(cols) {
                        for (acc, v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *b, db, &[cols]);
                    accumulate(&mut grads, *x, g.into_data(), node.value.shape());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.data().to_vec(), g.shape());
                    accumulate(&mut grads, *b, g.into_data(), node.value.shape());
                }
                Op::Sub(a, b) => {
                    let neg: Vec<f64> = g.data().iter().map(|v| -v).collect();
                    accumulate(&mut grads, *b, neg, g.shape());
                    accumulate(&mut grads, *a, g.into_data(), node.value.shape());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let da = g.data().iter().zip(bv).map(|(g, b)| g * b).collect();
                    let db = g.data().iter().zip(av).map(|(g, a)| g * a).collect();
                    accumulate(&mut grads, *a, da, g.shape());
                    accumulate(&mut grads, *b, db, g.shape());
                }
                Op::OneMinus(x) => {
                    let dx = g.data().iter().map(|v| -v).collect();
                    accumulate(&mut grads, *x, dx, g.shape());
                }
                Op::AddConst(x) => accumulate(&mut grads, *x, g.into_data(), node.value.shape()),
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    geom,
                } => {
                    let (dx, dk, db) = ops::conv2d_backward(
                        self.value(*input).data(),
                        self.value(*kernel).data(),
                        g.data(),
                        geom,
                    );
                    accumulate(&mut grads, *input, dx, self.shape(*input));
                    accumulate(&mut grads, *kernel, dk, self.shape(*kernel));
                    accumulate(&mut grads, *bias, db, self.shape(*bias));
                }
                Op::Relu(x) => {
                    let xv = self.value(*x).data();
                    let dx = g
                        .data()
                        .iter()
                        .zip(xv)
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, dx, g.shape());
                }
                Op::Tanh(x) => {
                    let y = node.value.data();
                    let dx = g.data().iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    accumulate(&mut grads, *x, dx, g.shape());
                }
                Op::Sigmoid(x) => {
                    let y = node.value.data();
                    let dx = g.data().iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    accumulate(&mut grads, *x, dx, g.shape());
                }
                Op::Softmax(x) => {
                    let width = *node.value.shape().last().unwrap_or(&1);
                    let mut dx = vec![0.0; g.len()];
                    for ((dxr, gr), yr) in dx
                        .chunks_mut(width)
                        .zip(g.data().chunks(width))
                        .zip(node.value.data().chunks(width))
                    {
                        let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                        for ((d, g), y) in dxr.iter_mut().zip(gr).zip(yr) {
                            *d = y * (g - dot);
                        }
                    }
                    accumulate(&mut grads, *x, dx, g.shape());
                }
                Op::LogSoftmax(x) => {
                    let width = *node.value.shape().last().unwrap_or(&1);
                    let mut dx = vec![0.0; g.len()];
                    for ((dxr, gr), yr) in dx
                        .chunks_mut(width)
                        .zip(g.data().chunks(width))
                        .zip(node.value.data().chunks(width))
                    {
                        let total: f64 = gr.iter().sum();
                        for ((d, g), y) in dxr.iter_mut().zip(gr).zip(yr) {
                            *d = g - y.exp() * total;
                        }
                    }
                    accumulate(&mut grads, *x, dx, g.shape());
                }
                Op::Reshape(x) => {
                    let shape = self.shape(*x).to_vec();
                    accumulate(&mut grads, *x, g.into_data(), &shape);
                }
                Op::Concat { inputs, axis } => {
                    let shapes: Vec<&[usize]> = inputs.iter().map(|v| self.shape(*v)).collect();
                    let parts = ops::split_axis(g.data(), node.value.shape(), &shapes, *axis);
                    for (v, part) in inputs.iter().zip(parts) {
                        let shape = self.shape(*v).to_vec();
                        accumulate(&mut grads, *v, part, &shape);
                    }
                }
                Op::Slice { input, axis, start } => {
                    let in_shape = self.shape(*input).to_vec();
                    let dx = ops::scatter_slice(g.data(), &in_shape, *axis, *start, g.shape()[*axis]);
                    accumulate(&mut grads, *input, dx, &in_shape);
                }
                Op::Sum(x) => {
                    let shape = self.shape(*x).to_vec();
                    let n = self.value(*x).len();
                    accumulate(&mut grads, *x, vec![g.data()[0]; n], &shape);
                }
                Op::SumSquares(x) => {
                    let s = g.data()[0];
                    let xv = self.value(*x);
                    let dx = xv.data().iter().map(|x| 2.0 * s * x).collect();
                    accumulate(&mut grads, *x, dx, xv.shape());
                }
                Op::PowerNormalize(x) => {
                    let xv = self.value(*x);
                    let dx = ops::power_normalize_backward(xv.data(), g.data());
                    accumulate(&mut grads, *x, dx, xv.shape());
                }
                Op::ComplexScale { input, re, im } => {
                    // multiply by conj(c)
                    let dx = ops::complex_scale(g.data(), *re, -*im);
                    accumulate(&mut grads, *input, dx, g.shape());
                }
                Op::External { input, grad } => {
                    let s = g.data()[0];
                    let dx = grad.data().iter().map(|v| v * s).collect();
                    accumulate(&mut grads, *input, dx, grad.shape());
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, delta: Vec<f64>, shape: &[usize]) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(&delta) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor {
                shape: shape.to_vec(),
                data: delta,
            })
        }
    }
}
