//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is an append-only tape. Tensors that touch a differentiable
//! leaf are recorded on it; everything else stays a detached constant.
//! Backward rules are written in terms of tensor operations themselves, so
//! with `create_graph` the gradients are ordinary graph nodes and can be
//! differentiated again.
//!
//! Graphs use `Rc` internally and are confined to the thread that created
//! them. Work that must cross threads goes through [`Array`].

mod ops;

use std::cell::RefCell;
use std::rc::Rc;

use crate::array::Array;
use crate::error::{Error, Result};

pub use ops::Op;

struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Rc<Array>,
    requires_grad: bool,
}

#[derive(Default)]
struct Tape {
    nodes: Vec<Node>,
}

/// Shared handle to a computation tape.
#[derive(Clone, Default)]
pub struct Graph(Rc<RefCell<Tape>>);

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a differentiable leaf.
    pub fn leaf(&self, value: Array) -> Tensor {
        let value = Rc::new(value);
        let id = self.push(Node {
            op: Op::Leaf,
            inputs: vec![],
            value: value.clone(),
            requires_grad: true,
        });
        Tensor {
            value,
            node: Some((self.clone(), id)),
        }
    }

    pub fn len(&self) -> usize {
        self.0.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node) -> usize {
        let mut tape = self.0.borrow_mut();
        tape.nodes.push(node);
        tape.nodes.len() - 1
    }

    fn same(&self, other: &Graph) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn handle(&self, id: usize) -> Tensor {
        let value = self.0.borrow().nodes[id].value.clone();
        Tensor {
            value,
            node: Some((self.clone(), id)),
        }
    }

    /// Recomputes every node from the recorded values of its inputs and
    /// reports whether each reproduces its stored value bit-exactly.
    pub fn replay_matches(&self) -> Result<bool> {
        let tape = self.0.borrow();
        for (id, node) in tape.nodes.iter().enumerate() {
            if node.inputs.iter().any(|&i| i >= id) {
                return Ok(false);
            }
            if matches!(node.op, Op::Leaf | Op::Constant) {
                continue;
            }
            let inputs: Vec<&Array> = node
                .inputs
                .iter()
                .map(|&i| tape.nodes[i].value.as_ref())
                .collect();
            let recomputed = node.op.forward(&inputs)?;
            let same = recomputed.shape() == node.value.shape()
                && recomputed
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// A dense array, optionally bound to a node of a [`Graph`].
#[derive(Clone)]
pub struct Tensor {
    value: Rc<Array>,
    node: Option<(Graph, usize)>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.value.shape())
            .field("data", &self.value.data())
            .field("node", &self.node_id())
            .finish()
    }
}

impl From<Array> for Tensor {
    fn from(a: Array) -> Self {
        Self::constant(a)
    }
}

impl Tensor {
    pub fn constant(value: Array) -> Self {
        Self {
            value: Rc::new(value),
            node: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::constant(Array::scalar(v))
    }

    pub fn vector(v: Vec<f64>) -> Self {
        Self::constant(Array::vector(v))
    }

    pub fn value(&self) -> &Array {
        &self.value
    }

    pub fn to_array(&self) -> Array {
        (*self.value).clone()
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.value.data()
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn item(&self) -> f64 {
        self.value.item()
    }

    pub fn node_id(&self) -> Option<usize> {
        self.node.as_ref().map(|(_, id)| *id)
    }

    pub fn graph(&self) -> Option<&Graph> {
        self.node.as_ref().map(|(g, _)| g)
    }

    pub fn requires_grad(&self) -> bool {
        match &self.node {
            Some((g, id)) => g.0.borrow().nodes[*id].requires_grad,
            None => false,
        }
    }

    /// Same values, no provenance.
    pub fn detach(&self) -> Tensor {
        Tensor {
            value: self.value.clone(),
            node: None,
        }
    }
}

/// Evaluates `op` on `inputs` and, when any input is differentiable,
/// appends the result to their graph.
pub fn record(op: Op, inputs: &[&Tensor]) -> Result<Tensor> {
    let values: Vec<&Array> = inputs.iter().map(|t| t.value.as_ref()).collect();
    let out = op.forward(&values)?;
    let mut graph: Option<&Graph> = None;
    for t in inputs {
        if let Some((g, _)) = &t.node {
            match graph {
                Some(existing) if !existing.same(g) => {
                    return Err(Error::GraphMismatch(op.tag()));
                }
                _ => graph = Some(g),
            }
        }
    }
    let requires_grad = inputs.iter().any(|t| t.requires_grad());
    match graph {
        Some(g) if requires_grad => {
            let value = Rc::new(out);
            let ids = inputs.iter().map(|t| t.node_id().unwrap_or(usize::MAX)).collect::<Vec<_>>();
            // Constant inputs get their own node so the tape stays closed.
            let ids = ids
                .into_iter()
                .zip(inputs)
                .map(|(id, t)| {
                    if id == usize::MAX {
                        g.push(Node {
                            op: Op::Constant,
                            inputs: vec![],
                            value: t.value.clone(),
                            requires_grad: false,
                        })
                    } else {
                        id
                    }
                })
                .collect();
            let id = g.push(Node {
                op,
                inputs: ids,
                value: value.clone(),
                requires_grad: true,
            });
            Ok(Tensor {
                value,
                node: Some((g.clone(), id)),
            })
        }
        _ => Ok(Tensor::constant(out)),
    }
}

/// Gradients of the scalar `output` with respect to each tensor in `wrt`.
///
/// Tensors that `output` does not depend on (including constants and tensors
/// on another graph) receive zeros. With `create_graph` the returned
/// gradients are recorded and can be differentiated again.
pub fn backward(output: &Tensor, wrt: &[&Tensor], create_graph: bool) -> Result<Vec<Tensor>> {
    if output.numel() != 1 {
        return Err(Error::NonScalar(output.shape().to_vec()));
    }
    let zeros = |t: &Tensor| Tensor::constant(Array::zeros(t.shape().to_vec()));
    let Some((graph, out_id)) = &output.node else {
        return Ok(wrt.iter().map(|t| zeros(t)).collect());
    };
    let targets: Vec<Option<usize>> = wrt
        .iter()
        .map(|t| match &t.node {
            Some((g, id)) if g.same(graph) && *id <= *out_id => Some(*id),
            _ => None,
        })
        .collect();
    let Some(lowest) = targets.iter().flatten().min().copied() else {
        return Ok(wrt.iter().map(|t| zeros(t)).collect());
    };

    let mut adjoint: Vec<Option<Tensor>> = vec![None; out_id + 1];
    adjoint[*out_id] = Some(Tensor::constant(Array::ones(output.shape().to_vec())));

    for id in (lowest..=*out_id).rev() {
        let Some(grad) = adjoint[id].take() else {
            continue;
        };
        let (op, inputs, requires) = {
            let tape = graph.0.borrow();
            let node = &tape.nodes[id];
            let requires: Vec<bool> = node
                .inputs
                .iter()
                .map(|&i| i >= lowest && tape.nodes[i].requires_grad)
                .collect();
            (node.op.clone(), node.inputs.clone(), requires)
        };
        if !requires.iter().any(|&r| r) {
            adjoint[id] = Some(grad);
            continue;
        }
        let bind = |i: usize| {
            let h = graph.handle(i);
            if create_graph {
                h
            } else {
                h.detach()
            }
        };
        let input_handles: Vec<Tensor> = inputs.iter().map(|&i| bind(i)).collect();
        let out_handle = bind(id);
        let grad = if create_graph { grad } else { grad.detach() };
        let contributions = op.vjp(&input_handles, &out_handle, &grad, &requires)?;
        for ((&input, contribution), &needed) in inputs.iter().zip(contributions).zip(&requires) {
            if !needed {
                continue;
            }
            let Some(c) = contribution else { continue };
            adjoint[input] = Some(match adjoint[input].take() {
                Some(acc) => acc.add(&c)?,
                None => c,
            });
        }
        adjoint[id] = Some(grad);
    }

    Ok(wrt
        .iter()
        .zip(&targets)
        .map(|(t, target)| match target {
            Some(id) => match &adjoint[*id] {
                Some(g) if create_graph => g.clone(),
                Some(g) => g.detach(),
                None => zeros(t),
            },
            None => zeros(t),
        })
        .collect())
}

/// Largest coordinate-wise discrepancy between the reverse-mode gradient of
/// `f` at `x` and central differences with step `h`.
///
/// Discrepancies are measured as `|a - n| / max(1, |a|, |n|)`, so tiny
/// gradients are compared absolutely.
pub fn finite_difference_check<F>(f: F, x: &Array, h: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let graph = Graph::new();
    let leaf = graph.leaf(x.clone());
    let y = f(&leaf)?;
    let analytic = backward(&y, &[&leaf], false)?.remove(0);
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let fp = f(&Tensor::constant(plus))?.item();
        let fm = f(&Tensor::constant(minus))?.item();
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
