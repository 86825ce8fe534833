use std::sync::atomic::{AtomicU32, Ordering};

use super::activation::Activation;
use super::conv::ConvGeom;
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    pub(crate) index: usize,
}

pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    AddChannelBias(Var, Var),
    Conv2d {
        x: Var,
        k: Var,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    ConvTranspose2d {
        x: Var,
        k: Var,
        geom: ConvGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        /// Batch statistics participate in the gradient (train mode).
        batch_stats: bool,
    },
    Activation(Var, Activation),
    Reshape(Var),
    Concat(Var, Var),
    BroadcastSpatial(Var),
    NormalizeRows {
        x: Var,
        norms: Vec<T>,
    },
    Sum(Var),
    Mean(Var),
    L2Sq(Var, Var),
    Bce {
        p: Var,
        target: Vec<T>,
    },
    BceWithLogits {
        logits: Var,
        target: Vec<T>,
    },
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Ordered record of executed primitives. Values are immutable once pushed;
/// [`Tape::backward`] replays the record in reverse.
pub struct Tape<T: Scalar = f32> {
    id: u32,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is accumulated by [`Tape::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<T>> {
        self.node(v).map(|n| &n.value)
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.value(v).expect("var from another tape").data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).expect("var from another tape").shape()
    }

    /// Gradient of the last backward root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.node(v).ok().and_then(|n| n.value.grad())
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).map(|n| n.requires_grad).unwrap_or(false)
    }

    fn node(&self, v: Var) -> Result<&Node<T>> {
        if v.tape != self.id {
            return Err(Error::ForeignVar);
        }
        self.nodes.get(v.index).ok_or(Error::ForeignVar)
    }

    pub(crate) fn check(&self, vars: &[Var]) -> Result<()> {
        for &v in vars {
            self.node(v)?;
        }
        Ok(())
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert!(value.numel() > 0);
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    pub(crate) fn any_requires_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.nodes[v.index].requires_grad)
    }

    pub(crate) fn val(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.index].value
    }

    /// Reverse-mode sweep from a scalar `root`. Every leaf created with
    /// [`Tape::param`] ends up with a gradient (zero if it does not reach
    /// `root`); previous gradients are discarded.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_shape = self.node(root)?.value.shape().to_vec();
        if self.nodes[root.index].value.numel() != 1 {
            return Err(Error::NonScalarRoot(root_shape));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.index] = Some(vec![T::one()]);
        for i in (0..=root.index).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.backward_node(i, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        for (node, grad) in self.nodes.iter_mut().zip(grads) {
            let grad = match (&node.op, grad) {
                (Op::Leaf, None) if node.requires_grad => Some(vec![T::zero(); node.value.numel()]),
                (_, g) if node.requires_grad => g,
                _ => None,
            };
            node.value.set_grad(grad);
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let mut acc = Accumulator { tape: self, grads };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc.add(*a, || g.to_vec());
                acc.add(*b, || g.to_vec());
            }
            Op::Sub(a, b) => {
                acc.add(*a, || g.to_vec());
                acc.add(*b, || g.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a).data(), self.val(*b).data());
                acc.add(*a, || g.iter().zip(bv).map(|(&g, &b)| g * b).collect());
                acc.add(*b, || g.iter().zip(av).map(|(&g, &a)| g * a).collect());
            }
            Op::Scale(a, c) => acc.add(*a, || g.iter().map(|&v| v * *c).collect()),
            Op::MatMul(a, b) => super::linalg::matmul_backward(&mut acc, *a, *b, g),
            Op::AddRowBias(x, b) => super::linalg::add_row_bias_backward(&mut acc, *x, *b, g),
            Op::AddChannelBias(x, b) => {
                super::linalg::add_channel_bias_backward(&mut acc, *x, *b, g)
            }
            Op::Conv2d { x, k, geom, cols } => {
                super::conv::conv2d_backward(&mut acc, *x, *k, geom, cols, g)
            }
            Op::ConvTranspose2d { x, k, geom } => {
                super::conv::conv_transpose2d_backward(&mut acc, *x, *k, geom, g)
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => super::norm::batch_norm_backward(
                &mut acc,
                [*x, *gamma, *beta],
                xhat,
                inv_std,
                *batch_stats,
                g,
            ),
            Op::Activation(x, kind) => {
                let (xv, yv) = (self.val(*x).data(), node.value.data());
                acc.add(*x, || kind.backward(xv, yv, g));
            }
            Op::Reshape(x) => acc.add(*x, || g.to_vec()),
            Op::Concat(a, b) => super::shape::concat_backward(&mut acc, *a, *b, g),
            Op::BroadcastSpatial(x) => super::shape::broadcast_spatial_backward(&mut acc, *x, g),
            Op::NormalizeRows { x, norms } => {
                super::shape::normalize_rows_backward(&mut acc, *x, node.value.data(), norms, g)
            }
            Op::Sum(x) => acc.add(*x, || vec![g[0]; self.val(*x).numel()]),
            Op::Mean(x) => {
                let n = self.val(*x).numel();
                let v = g[0] / T::from_f64(n as f64);
                acc.add(*x, || vec![v; n]);
            }
            Op::L2Sq(a, b) => super::loss::l2_sq_backward(&mut acc, *a, *b, g[0]),
            Op::Bce { p, target } => super::loss::bce_backward(&mut acc, *p, target, g[0]),
            Op::BceWithLogits { logits, target } => {
                super::loss::bce_logits_backward(&mut acc, *logits, target, g[0])
            }
            Op::SoftmaxXent {
                logits,
                labels,
                probs,
            } => super::loss::softmax_xent_backward(&mut acc, *logits, labels, probs, g[0]),
        }
    }
}

/// Gradient sink used by backward rules; skips inputs that need no gradient.
pub(crate) struct Accumulator<'a, T: Scalar> {
    pub tape: &'a Tape<T>,
    grads: &'a mut [Option<Vec<T>>],
}

impl<T: Scalar> Accumulator<'_, T> {
    pub fn wants(&self, v: Var) -> bool {
        self.tape.nodes[v.index].requires_grad
    }

    pub fn add(&mut self, v: Var, contribution: impl FnOnce() -> Vec<T>) {
        if !self.wants(v) {
            return;
        }
        let c = contribution();
        match &mut self.grads[v.index] {
            Some(existing) => existing.iter_mut().zip(&c).for_each(|(e, &c)| *e = *e + c),
            slot @ None => *slot = Some(c),
        }
    }
}
