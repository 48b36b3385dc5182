//! Reverse-mode automatic differentiation over [`NdArray`] values.
//!
//! Operations append nodes to a [`Tape`] in execution order, so the tape is
//! its own topological sort. [`Tape::backward`] sweeps it once in reverse,
//! seeding the scalar loss with gradient 1 and accumulating into every node
//! that requires a gradient.
//!
//! ```
//! use freqseg::tensor::{NdArray, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(NdArray::scalar(3.0), true);
//! let y = tape.mul(x, x).unwrap();
//! tape.backward(y).unwrap();
//! assert_eq!(tape.grad(x).unwrap().item(), Some(6.0));
//! ```

use super::conv::{self, ConvGeometry};
use super::{pool, NdArray, TensorError};

/// Handle to a node on a [`Tape`].
///
/// Handles are plain indices; they are only meaningful for the tape that
/// produced them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tensor(usize);

impl Tensor {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op {
    Leaf,
    Add(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Sum(Tensor),
    LeakyRelu {
        input: Tensor,
        slope: f64,
    },
    Sigmoid(Tensor),
    Concat {
        a: Tensor,
        b: Tensor,
    },
    Conv {
        input: Tensor,
        weight: Tensor,
        bias: Tensor,
        geom: ConvGeometry,
    },
    ConvTranspose {
        input: Tensor,
        weight: Tensor,
        bias: Tensor,
        geom: ConvGeometry,
    },
    MaxPool {
        input: Tensor,
        argmax: Vec<usize>,
    },
    SoftDice {
        pred: Tensor,
        /// d loss / d pred, computed during the forward pass.
        dpred: NdArray,
    },
}

struct Node {
    value: NdArray,
    grad: Option<NdArray>,
    requires_grad: bool,
    op: Op,
}

/// A recorded computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input or parameter.
    pub fn leaf(&mut self, value: NdArray, requires_grad: bool) -> Tensor {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Registers a value that never receives a gradient.
    pub fn constant(&mut self, value: NdArray) -> Tensor {
        self.leaf(value, false)
    }

    pub fn value(&self, t: Tensor) -> &NdArray {
        &self.nodes[t.0].value
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        self.nodes[t.0].value.shape()
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.nodes[t.0].requires_grad
    }

    /// Gradient accumulated by [`Tape::backward`], if any reached this node.
    pub fn grad(&self, t: Tensor) -> Option<&NdArray> {
        self.nodes[t.0].grad.as_ref()
    }

    pub(crate) fn push(&mut self, value: NdArray, requires_grad: bool, op: Op) -> Tensor {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Tensor(self.nodes.len() - 1)
    }

    fn any_grad(&self, inputs: &[Tensor]) -> bool {
        inputs.iter().any(|t| self.nodes[t.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Tensor, b: Tensor) -> Result<(), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, TensorError> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, TensorError> {
        self.same_shape("mul", a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = NdArray::new(va.shape(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Mul(a, b)))
    }

    pub fn sum(&mut self, a: Tensor) -> Tensor {
        let value = NdArray::scalar(self.value(a).sum());
        let rg = self.any_grad(&[a]);
        self.push(value, rg, Op::Sum(a))
    }

    pub fn leaky_relu(&mut self, input: Tensor, slope: f64) -> Tensor {
        let value = self
            .value(input)
            .map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.any_grad(&[input]);
        self.push(value, rg, Op::LeakyRelu { input, slope })
    }

    pub fn sigmoid(&mut self, input: Tensor) -> Tensor {
        let value = self.value(input).map(sigmoid);
        let rg = self.any_grad(&[input]);
        self.push(value, rg, Op::Sigmoid(input))
    }

    /// Stacks two `[B, C, X, Y, Z]` tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Tensor, b: Tensor) -> Result<Tensor, TensorError> {
        let (ba, ca, ea) = self.value(a).volume_dims("concat_channels")?;
        let (bb, cb, eb) = self.value(b).volume_dims("concat_channels")?;
        if ba != bb || ea != eb {
            return Err(TensorError::ShapeMismatch {
                op: "concat_channels",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let vox: usize = ea.iter().product();
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(ba * (ca + cb) * vox);
        for n in 0..ba {
            data.extend_from_slice(&va[n * ca * vox..(n + 1) * ca * vox]);
            data.extend_from_slice(&vb[n * cb * vox..(n + 1) * cb * vox]);
        }
        let value = NdArray::new(&[ba, ca + cb, ea[0], ea[1], ea[2]], data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Concat { a, b }))
    }

    /// Copies channels `[start, start + count)` out of a `[B, C, X, Y, Z]`
    /// value. Not recorded on the tape.
    pub fn slice_channels(&self, t: Tensor, start: usize, count: usize) -> Result<NdArray, TensorError> {
        let (b, c, e) = self.value(t).volume_dims("slice_channels")?;
        if start + count > c || count == 0 {
            return Err(TensorError::ChannelRange { start, count, channels: c });
        }
        let vox: usize = e.iter().product();
        let src = self.value(t).data();
        let mut data = Vec::with_capacity(b * count * vox);
        for n in 0..b {
            let base = (n * c + start) * vox;
            data.extend_from_slice(&src[base..base + count * vox]);
        }
        NdArray::new(&[b, count, e[0], e[1], e[2]], data)
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// A tape can be swept exactly once; a second call returns
    /// [`TensorError::BackwardTwice`]. Build a fresh tape per step.
    pub fn backward(&mut self, loss: Tensor) -> Result<(), TensorError> {
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        let shape = self.shape(loss).to_vec();
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss { shape });
        }
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(NdArray::full(&shape, 1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || self.nodes[i].grad.is_none() {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            let grad = self.nodes[i].grad.take().expect("checked above");
            let contributions = self.input_grads(i, &op, &grad)?;
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(grad);
            for (t, g) in contributions {
                self.accumulate(t, g);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, t: Tensor, g: NdArray) {
        let node = &mut self.nodes[t.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(existing) => existing.add_assign(&g),
            None => node.grad = Some(g),
        }
    }

    fn wants(&self, t: Tensor) -> bool {
        self.nodes[t.0].requires_grad
    }

    fn input_grads(&self, i: usize, op: &Op, grad: &NdArray) -> Result<Vec<(Tensor, NdArray)>, TensorError> {
        let mut out = Vec::new();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                out.push((*a, grad.clone()));
                out.push((*b, grad.clone()));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let d = grad.data().iter().zip(vb.data()).map(|(g, y)| g * y).collect();
                    out.push((*a, NdArray::new(va.shape(), d)?));
                }
                if self.wants(*b) {
                    let d = grad.data().iter().zip(va.data()).map(|(g, x)| g * x).collect();
                    out.push((*b, NdArray::new(vb.shape(), d)?));
                }
            }
            Op::Sum(a) => {
                let g = grad.data()[0];
                out.push((*a, NdArray::full(self.shape(*a), g)));
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input);
                let d = grad
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { slope * g })
                    .collect();
                out.push((*input, NdArray::new(x.shape(), d)?));
            }
            Op::Sigmoid(input) => {
                let y = &self.nodes[i].value;
                let d = grad
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                out.push((*input, NdArray::new(y.shape(), d)?));
            }
            Op::Concat { a, b } => {
                let (_, ca, _) = self.value(*a).volume_dims("concat_channels")?;
                let (_, cb, _) = self.value(*b).volume_dims("concat_channels")?;
                let (bsz, _, e) = grad.volume_dims("concat_channels")?;
                let vox: usize = e.iter().product();
                let g = grad.data();
                let mut ga = Vec::with_capacity(bsz * ca * vox);
                let mut gb = Vec::with_capacity(bsz * cb * vox);
                for n in 0..bsz {
                    let base = n * (ca + cb) * vox;
                    ga.extend_from_slice(&g[base..base + ca * vox]);
                    gb.extend_from_slice(&g[base + ca * vox..base + (ca + cb) * vox]);
                }
                out.push((*a, NdArray::new(self.shape(*a), ga)?));
                out.push((*b, NdArray::new(self.shape(*b), gb)?));
            }
            Op::Conv {
                input,
                weight,
                bias,
                geom,
            } => {
                let grads = conv::conv_backward(
                    geom,
                    self.value(*input),
                    self.value(*weight),
                    grad,
                    self.wants(*input),
                )?;
                if let Some(gi) = grads.input {
                    out.push((*input, gi));
                }
                out.push((*weight, grads.weight));
                out.push((*bias, grads.bias));
            }
            Op::ConvTranspose {
                input,
                weight,
                bias,
                geom,
            } => {
                let grads = conv::conv_transpose_backward(
                    geom,
                    self.value(*input),
                    self.value(*weight),
                    grad,
                    self.wants(*input),
                )?;
                if let Some(gi) = grads.input {
                    out.push((*input, gi));
                }
                out.push((*weight, grads.weight));
                out.push((*bias, grads.bias));
            }
            Op::MaxPool { input, argmax } => {
                out.push((*input, pool::maxpool_backward(self.shape(*input), argmax, grad)));
            }
            Op::SoftDice { pred, dpred } => {
                let g = grad.data()[0];
                out.push((*pred, dpred.map(|d| d * g)));
            }
        }
        Ok(out)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
