use super::ops;
use super::{Result, Scalar, Tensor, TensorError};

/// One of the supported differentiable primitives, with its attributes.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Div,
    Matmul,
    Conv2d { stride: usize, pad: usize },
    TransposeConv2d { stride: usize, pad: usize, out_pad: usize },
    LeakyRelu { slope: f64 },
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Pow,
    Sum { axis: Option<usize> },
    Mean { axis: Option<usize> },
    Concat { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    Broadcast { shape: Vec<usize> },
    NormalizeL2Channel,
    InstanceNorm,
    Clamp { lo: f64, hi: f64 },
    PixelResample { out_h: usize, out_w: usize },
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Add => "add",
            Self::Sub => "sub",
            Self::Mul => "mul",
            Self::Div => "div",
            Self::Matmul => "matmul",
            Self::Conv2d { .. } => "conv2d",
            Self::TransposeConv2d { .. } => "transpose_conv2d",
            Self::LeakyRelu { .. } => "leaky_relu",
            Self::Relu => "relu",
            Self::Tanh => "tanh",
            Self::Sigmoid => "sigmoid",
            Self::Exp => "exp",
            Self::Log => "log",
            Self::Pow => "pow",
            Self::Sum { .. } => "sum",
            Self::Mean { .. } => "mean",
            Self::Concat { .. } => "concat",
            Self::Slice { .. } => "slice",
            Self::Broadcast { .. } => "broadcast",
            Self::NormalizeL2Channel => "normalize_l2_channel",
            Self::InstanceNorm => "instance_norm",
            Self::Clamp { .. } => "clamp",
            Self::PixelResample { .. } => "pixel_resample",
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    pub(crate) id: usize,
}

impl Var {
    pub fn id(self) -> usize {
        self.id
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    requires_grad: bool,
    /// `None` for leaves; recorded application otherwise.
    op: Option<(Primitive, Vec<Var>)>,
}

/// Recording tape. Nodes are appended in execution order, so the node list is
/// already a topological order and backward is a single reverse sweep.
///
/// A tape is single-threaded; distinct tapes may run on distinct threads.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register a leaf that participates in differentiation.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, true, None)
    }

    /// Register a constant leaf; no gradient is materialized for it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, false, None)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(T::from_f64(v)))
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Option<(Primitive, Vec<Var>)>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var {
            id: self.nodes.len() - 1,
        }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.id].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.id].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.id].requires_grad
    }

    fn check_var(&self, v: Var) -> Result<()> {
        if v.id >= self.nodes.len() {
            return Err(TensorError::InvalidVar {
                id: v.id,
                tape_len: self.nodes.len(),
            });
        }
        Ok(())
    }

    /// Apply a primitive: compute the forward value and record the
    /// application. Gradients later flow only into inputs that require them.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        for &v in inputs {
            self.check_var(v)?;
        }
        let values: Vec<&Tensor<T>> = inputs.iter().map(|v| &self.nodes[v.id].value).collect();
        let out = ops::forward(&prim, &values)?;
        let requires = inputs.iter().any(|v| self.nodes[v.id].requires_grad);
        Ok(self.push(out, requires, Some((prim, inputs.to_vec()))))
    }

    /// Reverse sweep from a scalar loss. Returns one gradient per
    /// grad-requiring node; leaves untouched by the loss get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        self.check_var(loss)?;
        let loss_node = &self.nodes[loss.id];
        if !loss_node.value.is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: loss_node.value.shape().to_vec(),
            });
        }

        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.id] = Some(vec![T::ONE; 1]);

        for id in (0..=loss.id).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = grads[id].take() else {
                continue;
            };
            if let Some((prim, inputs)) = &node.op {
                let grad_t = Tensor::new(node.value.shape().to_vec(), grad)?;
                let in_values: Vec<&Tensor<T>> =
                    inputs.iter().map(|v| &self.nodes[v.id].value).collect();
                let needs: Vec<bool> = inputs
                    .iter()
                    .map(|v| self.nodes[v.id].requires_grad)
                    .collect();
                let input_grads = ops::backward(prim, &in_values, &node.value, &grad_t, &needs)?;
                for (slot, g) in inputs.iter().zip(input_grads) {
                    let Some(g) = g else { continue };
                    match &mut grads[slot.id] {
                        Some(acc) => {
                            for (a, b) in acc.iter_mut().zip(g.data()) {
                                *a += *b;
                            }
                        }
                        empty => *empty = Some(g.data().to_vec()),
                    }
                }
            } else {
                // leaf: keep its accumulated gradient
                grads[id] = Some(grad);
            }
        }

        // Materialize zeros for grad-requiring leaves the loss never touched.
        let mut out: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && node.op.is_none() {
                let t = match grads[id].take() {
                    Some(g) => Tensor::new(node.value.shape().to_vec(), g)?,
                    None => Tensor::zeros(node.value.shape()),
                };
                out[id] = Some(t);
            }
        }
        Ok(Gradients { grads: out })
    }

    // Convenience wrappers around `apply`.

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Div, &[a, b])
    }
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Matmul, &[a, b])
    }
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        self.apply(Primitive::Conv2d { stride, pad }, &[x, w])
    }
    pub fn transpose_conv2d(
        &mut self,
        x: Var,
        w: Var,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Result<Var> {
        self.apply(
            Primitive::TransposeConv2d {
                stride,
                pad,
                out_pad,
            },
            &[x, w],
        )
    }
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.apply(Primitive::LeakyRelu { slope }, &[x])
    }
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Relu, &[x])
    }
    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Tanh, &[x])
    }
    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Sigmoid, &[x])
    }
    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Exp, &[x])
    }
    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Log, &[x])
    }
    pub fn pow(&mut self, base: Var, exponent: Var) -> Result<Var> {
        self.apply(Primitive::Pow, &[base, exponent])
    }
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Sum { axis: None }, &[x])
    }
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::Sum { axis: Some(axis) }, &[x])
    }
    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Mean { axis: None }, &[x])
    }
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::Mean { axis: Some(axis) }, &[x])
    }
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        self.apply(Primitive::Concat { axis }, xs)
    }
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.apply(Primitive::Slice { axis, start, len }, &[x])
    }
    pub fn broadcast(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.apply(
            Primitive::Broadcast {
                shape: shape.to_vec(),
            },
            &[x],
        )
    }
    pub fn normalize_l2_channel(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::NormalizeL2Channel, &[x])
    }
    pub fn instance_norm(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::InstanceNorm, &[x])
    }
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        self.apply(Primitive::Clamp { lo, hi }, &[x])
    }
    pub fn pixel_resample(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        self.apply(Primitive::PixelResample { out_h, out_w }, &[x])
    }

    // Common composites.

    /// `|x|` built as `relu(x) + relu(-x)`.
    pub fn abs(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let zero = self.constant(Tensor::zeros(&shape));
        let neg = self.sub(zero, x)?;
        let pos_part = self.relu(x)?;
        let neg_part = self.relu(neg)?;
        self.add(pos_part, neg_part)
    }

    /// Scale by a scalar constant.
    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let k = self.constant_scalar(factor);
        self.mul(x, k)
    }

    /// Add a scalar constant.
    pub fn add_scalar(&mut self, x: Var, value: f64) -> Result<Var> {
        let k = self.constant_scalar(value);
        self.add(x, k)
    }

    /// `log(1 + exp(x))` with the pre-activation clamped to keep `exp` tame.
    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let clamped = self.clamp(x, -30.0, 30.0)?;
        let e = self.exp(clamped)?;
        let one_plus = self.add_scalar(e, 1.0)?;
        self.log(one_plus)
    }
}

/// Gradient per grad-requiring leaf, indexed by the `Var` returned at
/// registration time.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of a grad-requiring leaf; panics if `v` is not one.
    pub fn expect(&self, v: Var) -> &Tensor<T> {
        self.get(v).expect("no gradient for var")
    }
}
