use super::ops::{self, Activation, ConvMode, ElementwiseKind, PoolKind};
use super::Tensor;
use crate::error::{shape_err, Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        mode: ConvMode,
    },
    FullyConnected {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    GlobalPool {
        input: Var,
        kind: PoolKind,
        argmax: Vec<usize>,
    },
    Elementwise {
        a: Var,
        b: Var,
        kind: ElementwiseKind,
    },
    Reshape {
        input: Var,
    },
    Huber {
        pred: Var,
        target: Var,
        delta: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only tape of tensor operations.
///
/// Nodes are recorded in evaluation order, so a reverse sweep over the node
/// list is a valid topological order for backpropagation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, mode: ConvMode) -> Result<Var> {
        let value = ops::conv2d(
            self.value(input),
            self.value(kernel),
            self.value(bias).data(),
            mode,
        )?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                mode,
            },
        ))
    }

    pub fn fully_connected(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let value = ops::fully_connected(
            self.value(input),
            self.value(weight),
            self.value(bias).data(),
        )?;
        Ok(self.push(
            value,
            Op::FullyConnected {
                input,
                weight,
                bias,
            },
        ))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let value = ops::activation(self.value(input), kind);
        self.push(value, Op::Activation { input, kind })
    }

    pub fn global_pool(&mut self, input: Var, kind: PoolKind) -> Result<Var> {
        let (value, argmax) = ops::global_pool(self.value(input), kind)?;
        Ok(self.push(
            value,
            Op::GlobalPool {
                input,
                kind,
                argmax,
            },
        ))
    }

    pub fn elementwise(&mut self, a: Var, b: Var, kind: ElementwiseKind) -> Result<Var> {
        let value = ops::elementwise(self.value(a), self.value(b), kind)?;
        Ok(self.push(value, Op::Elementwise { a, b, kind }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseKind::Add)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseKind::Mul)
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape { input }))
    }

    /// Mean Huber loss as a scalar node.
    pub fn huber_loss(&mut self, pred: Var, target: Var, delta: f64) -> Result<Var> {
        let loss = ops::huber_loss(self.value(pred), self.value(target), delta)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Huber {
                pred,
                target,
                delta,
            },
        ))
    }

    /// Reverse sweep from a scalar node. Gradients from multiple consumers of
    /// the same node are summed.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0].value;
        if root.len() != 1 {
            return shape_err(format!(
                "backward needs a scalar, got shape {:?}",
                root.shape()
            ));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::from_parts(root.shape().to_vec(), vec![1.0]));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let mut send = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(acc) => acc.accumulate(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    mode,
                } => {
                    let (gi, gk, gb) =
                        ops::conv2d_backward(self.value(*input), self.value(*kernel), *mode, &g)?;
                    send(*input, gi);
                    send(*kernel, gk);
                    send(*bias, gb.reshape(self.value(*bias).shape())?);
                }
                Op::FullyConnected {
                    input,
                    weight,
                    bias,
                } => {
                    let (gi, gw, gb) =
                        ops::fully_connected_backward(self.value(*input), self.value(*weight), &g)?;
                    send(*input, gi);
                    send(*weight, gw);
                    send(*bias, gb.reshape(self.value(*bias).shape())?);
                }
                Op::Activation { input, kind } => {
                    send(*input, ops::activation_backward(&node.value, *kind, &g));
                }
                Op::GlobalPool {
                    input,
                    kind,
                    argmax,
                } => {
                    let shape = self.value(*input).shape();
                    send(*input, ops::global_pool_backward(shape, *kind, argmax, &g));
                }
                Op::Elementwise { a, b, kind } => {
                    let (ga, gb) =
                        ops::elementwise_backward(self.value(*a), self.value(*b), *kind, &g)?;
                    send(*a, ga);
                    send(*b, gb);
                }
                Op::Reshape { input } => {
                    send(*input, g.clone().reshape(self.value(*input).shape())?);
                }
                Op::Huber {
                    pred,
                    target,
                    delta,
                } => {
                    let (gp, gt) = ops::huber_backward(
                        self.value(*pred),
                        self.value(*target),
                        *delta,
                        g.item()?,
                    )?;
                    send(*pred, gp);
                    send(*target, gt);
                }
            }
            grads[idx] = Some(g);
        }
        for (idx, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.data().iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of node {idx}")));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
