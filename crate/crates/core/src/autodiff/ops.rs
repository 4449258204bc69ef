use crate::array::Array;
use crate::error::{Error, Result};

use super::{record, Tensor};

/// Recordable operations.
///
/// Binary elementwise ops accept equal shapes, or one operand with a single
/// element which is broadcast against the other.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    MatMul,
    Transpose,
    Tanh,
    Relu,
    Square,
    Sqrt,
    Sum,
    Mean,
    L2Norm,
    /// Concatenation along the leading axis.
    Concat,
    /// Rows `start..start + len` of the leading axis.
    Slice { start: usize, len: usize },
    Reshape(Vec<usize>),
    Scale(f64),
    Shift(f64),
    /// Replaces entries with magnitude below the floor by `±floor`; those
    /// entries get zero gradient.
    FloorMagnitude(f64),
}

fn shape_err(op: &'static str, inputs: &[&Array]) -> Error {
    Error::Shape {
        op,
        shapes: inputs.iter().map(|a| a.shape().to_vec()).collect(),
    }
}

fn broadcast(op: &'static str, a: &Array, b: &Array, f: impl Fn(f64, f64) -> f64) -> Result<Array> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    if a.len() == 1 {
        let s = a.item();
        return Ok(b.map(|v| f(s, v)));
    }
    if b.len() == 1 {
        let s = b.item();
        return Ok(a.map(|v| f(v, s)));
    }
    Err(shape_err(op, &[a, b]))
}

fn leading_split(a: &Array) -> Option<(usize, &[usize])> {
    a.shape().split_first().map(|(&n, rest)| (n, rest))
}

impl Op {
    pub fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Add => "add",
            Op::Sub => "subtract",
            Op::Mul => "multiply",
            Op::Div => "divide",
            Op::Neg => "negate",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Tanh => "tanh",
            Op::Relu => "relu",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::L2Norm => "l2-norm",
            Op::Concat => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::Scale(_) => "scale",
            Op::Shift(_) => "shift",
            Op::FloorMagnitude(_) => "floor-magnitude",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Op::Leaf | Op::Constant => Some(0),
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::MatMul => Some(2),
            Op::Concat => None,
            _ => Some(1),
        }
    }

    pub(crate) fn forward(&self, inputs: &[&Array]) -> Result<Array> {
        let tag = self.tag();
        match self.arity() {
            Some(0) => {
                return Err(Error::InvalidArgument(format!("{tag} cannot be evaluated")));
            }
            Some(n) if inputs.len() != n => {
                return Err(Error::InvalidArgument(format!(
                    "{tag} expects {n} inputs, got {}",
                    inputs.len()
                )));
            }
            None if inputs.is_empty() => {
                return Err(Error::InvalidArgument(format!("{tag} needs inputs")));
            }
            _ => {}
        }
        let a = inputs[0];
        match self {
            Op::Leaf | Op::Constant => unreachable!(),
            Op::Add => broadcast(tag, a, inputs[1], |x, y| x + y),
            Op::Sub => broadcast(tag, a, inputs[1], |x, y| x - y),
            Op::Mul => broadcast(tag, a, inputs[1], |x, y| x * y),
            Op::Div => broadcast(tag, a, inputs[1], |x, y| x / y),
            Op::Neg => Ok(a.map(|x| -x)),
            Op::MatMul => a.matmul(inputs[1]).map_err(|_| shape_err(tag, inputs)),
            Op::Transpose => a.transpose().map_err(|_| shape_err(tag, inputs)),
            Op::Tanh => Ok(a.map(f64::tanh)),
            Op::Relu => Ok(a.map(|x| x.max(0.0))),
            Op::Square => Ok(a.map(|x| x * x)),
            Op::Sqrt => Ok(a.map(f64::sqrt)),
            Op::Sum => Ok(Array::scalar(a.data().iter().sum())),
            Op::Mean => {
                if a.is_empty() {
                    return Err(shape_err(tag, inputs));
                }
                Ok(Array::scalar(a.data().iter().sum::<f64>() / a.len() as f64))
            }
            Op::L2Norm => Ok(Array::scalar(a.norm2())),
            Op::Concat => {
                let Some((_, rest)) = leading_split(a) else {
                    return Err(shape_err(tag, inputs));
                };
                let mut rows = 0;
                let mut data = Vec::new();
                for x in inputs {
                    match leading_split(x) {
                        Some((n, r)) if r == rest => {
                            rows += n;
                            data.extend_from_slice(x.data());
                        }
                        _ => return Err(shape_err(tag, inputs)),
                    }
                }
                let mut shape = vec![rows];
                shape.extend_from_slice(rest);
                Array::new(shape, data)
            }
            Op::Slice { start, len } => {
                let Some((n, rest)) = leading_split(a) else {
                    return Err(shape_err(tag, inputs));
                };
                if start + len > n {
                    return Err(Error::Shape {
                        op: tag,
                        shapes: vec![a.shape().to_vec(), vec![*start, *len]],
                    });
                }
                let stride: usize = rest.iter().product();
                let mut shape = vec![*len];
                shape.extend_from_slice(rest);
                Array::new(
                    shape,
                    a.data()[start * stride..(start + len) * stride].to_vec(),
                )
            }
            Op::Reshape(shape) => a
                .clone()
                .reshaped(shape.clone())
                .map_err(|_| Error::Shape {
                    op: tag,
                    shapes: vec![a.shape().to_vec(), shape.clone()],
                }),
            Op::Scale(c) => Ok(a.map(|x| c * x)),
            Op::Shift(c) => Ok(a.map(|x| x + c)),
            Op::FloorMagnitude(eps) => Ok(a.map(|x| {
                if x.abs() >= *eps {
                    x
                } else if x < 0.0 {
                    -eps
                } else {
                    *eps
                }
            })),
        }
    }

    /// Vector-Jacobian products for each input, expressed with tensor ops so
    /// that they record when the handles are on a graph.
    pub(crate) fn vjp(
        &self,
        inputs: &[Tensor],
        out: &Tensor,
        grad: &Tensor,
        needed: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let need = |i: usize| needed.get(i).copied().unwrap_or(false);
        let one = |t: Result<Tensor>| t.map(|t| vec![Some(t)]);
        match self {
            Op::Leaf | Op::Constant => Ok(vec![]),
            Op::Add => {
                let (a, b) = (&inputs[0], &inputs[1]);
                Ok(vec![
                    need(0).then(|| reduce_to(grad, a.shape())).transpose()?,
                    need(1).then(|| reduce_to(grad, b.shape())).transpose()?,
                ])
            }
            Op::Sub => {
                let (a, b) = (&inputs[0], &inputs[1]);
                Ok(vec![
                    need(0).then(|| reduce_to(grad, a.shape())).transpose()?,
                    need(1)
                        .then(|| reduce_to(&grad.neg()?, b.shape()))
                        .transpose()?,
                ])
            }
            Op::Mul => {
                let (a, b) = (&inputs[0], &inputs[1]);
                Ok(vec![
                    need(0)
                        .then(|| reduce_to(&grad.mul(b)?, a.shape()))
                        .transpose()?,
                    need(1)
                        .then(|| reduce_to(&grad.mul(a)?, b.shape()))
                        .transpose()?,
                ])
            }
            Op::Div => {
                let (a, b) = (&inputs[0], &inputs[1]);
                Ok(vec![
                    need(0)
                        .then(|| reduce_to(&grad.div(b)?, a.shape()))
                        .transpose()?,
                    need(1)
                        .then(|| reduce_to(&grad.mul(a)?.div(&b.square()?)?.neg()?, b.shape()))
                        .transpose()?,
                ])
            }
            Op::Neg => one(grad.neg()),
            Op::MatMul => {
                let (a, b) = (&inputs[0], &inputs[1]);
                Ok(vec![
                    need(0)
                        .then(|| grad.matmul(&b.transpose()?))
                        .transpose()?,
                    need(1)
                        .then(|| a.transpose()?.matmul(grad))
                        .transpose()?,
                ])
            }
            Op::Transpose => one(grad.transpose()),
            Op::Tanh => one(grad.mul(&out.square()?.neg()?.shift(1.0)?)),
            Op::Relu => {
                let mask = inputs[0].value().map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                one(grad.mul(&Tensor::constant(mask)))
            }
            Op::Square => one(grad.mul(&inputs[0].scale(2.0)?)),
            Op::Sqrt => one(grad.div(&out.scale(2.0)?)),
            Op::Sum => one(expand(grad, inputs[0].shape())),
            Op::Mean => {
                let n = inputs[0].numel() as f64;
                one(expand(&grad.scale(1.0 / n)?, inputs[0].shape()))
            }
            Op::L2Norm => {
                if out.item() == 0.0 {
                    one(Ok(Tensor::constant(Array::zeros(inputs[0].shape().to_vec()))))
                } else {
                    one(inputs[0].mul(&grad.div(out)?))
                }
            }
            Op::Concat => {
                let mut offset = 0;
                let mut grads = Vec::with_capacity(inputs.len());
                for (i, x) in inputs.iter().enumerate() {
                    let rows = x.shape()[0];
                    grads.push(need(i).then(|| grad.slice(offset, rows)).transpose()?);
                    offset += rows;
                }
                Ok(grads)
            }
            Op::Slice { start, len } => {
                let shape = inputs[0].shape();
                let rest = &shape[1..];
                let zeros = |rows: usize| {
                    let mut s = vec![rows];
                    s.extend_from_slice(rest);
                    Tensor::constant(Array::zeros(s))
                };
                let mut parts = Vec::with_capacity(3);
                if *start > 0 {
                    parts.push(zeros(*start));
                }
                parts.push(grad.clone());
                let tail = shape[0] - start - len;
                if tail > 0 {
                    parts.push(zeros(tail));
                }
                let refs: Vec<&Tensor> = parts.iter().collect();
                one(Tensor::concat(&refs))
            }
            Op::Reshape(_) => one(grad.reshape(inputs[0].shape().to_vec())),
            Op::Scale(c) => one(grad.scale(*c)),
            Op::Shift(_) => one(Ok(grad.clone())),
            Op::FloorMagnitude(eps) => {
                let mask = inputs[0]
                    .value()
                    .map(|x| if x.abs() >= *eps { 1.0 } else { 0.0 });
                one(grad.mul(&Tensor::constant(mask)))
            }
        }
    }
}

/// Sums a broadcast gradient back down to a single-element operand.
fn reduce_to(grad: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if grad.shape() == shape {
        return Ok(grad.clone());
    }
    let reduced = if grad.numel() == 1 { grad.clone() } else { grad.sum()? };
    reduced.reshape(shape.to_vec())
}

/// Broadcasts a single-element gradient to `shape`.
fn expand(grad: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let ones = Tensor::constant(Array::ones(shape.to_vec()));
    ones.mul(grad)?.reshape(shape.to_vec())
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        record(Op::Add, &[self, other])
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        record(Op::Sub, &[self, other])
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        record(Op::Mul, &[self, other])
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        record(Op::Div, &[self, other])
    }

    pub fn neg(&self) -> Result<Tensor> {
        record(Op::Neg, &[self])
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        record(Op::MatMul, &[self, other])
    }

    /// `A v` for a rank-2 `A` and rank-1 `v`, returning a rank-1 tensor.
    pub fn matvec(&self, v: &Tensor) -> Result<Tensor> {
        let n = v.numel();
        let rows = self.shape().first().copied().unwrap_or(0);
        self.matmul(&v.reshape(vec![n, 1])?)?.reshape(vec![rows])
    }

    pub fn transpose(&self) -> Result<Tensor> {
        record(Op::Transpose, &[self])
    }

    pub fn tanh(&self) -> Result<Tensor> {
        record(Op::Tanh, &[self])
    }

    pub fn relu(&self) -> Result<Tensor> {
        record(Op::Relu, &[self])
    }

    pub fn square(&self) -> Result<Tensor> {
        record(Op::Square, &[self])
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        record(Op::Sqrt, &[self])
    }

    pub fn sum(&self) -> Result<Tensor> {
        record(Op::Sum, &[self])
    }

    pub fn mean(&self) -> Result<Tensor> {
        record(Op::Mean, &[self])
    }

    pub fn l2_norm(&self) -> Result<Tensor> {
        record(Op::L2Norm, &[self])
    }

    pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
        record(Op::Concat, parts)
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<Tensor> {
        record(Op::Slice { start, len }, &[self])
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        if shape == self.shape() {
            return Ok(self.clone());
        }
        record(Op::Reshape(shape), &[self])
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        record(Op::Scale(c), &[self])
    }

    pub fn shift(&self, c: f64) -> Result<Tensor> {
        record(Op::Shift(c), &[self])
    }

    pub fn floor_magnitude(&self, eps: f64) -> Result<Tensor> {
        record(Op::FloorMagnitude(eps), &[self])
    }
}
