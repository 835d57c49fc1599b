//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles in
//! execution order, which is already a topological order. [`Graph::backward`]
//! walks the tape in reverse exactly once and accumulates gradients
//! additively across fan-out.

mod backward;
mod nn;
mod ops;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::kernels::Conv2dGeom;
use crate::params::{Gradients, ModelParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use nn::{BatchNormState, RunningStats};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Backward rule of a user-defined op: `(inputs, output, output_grad)` to one
/// optional gradient per input.
pub type CustomBackward<T> = Box<dyn Fn(&[&Tensor<T>], &Tensor<T>, &Tensor<T>) -> Vec<Option<Tensor<T>>>>;

pub(crate) enum Op<T: Scalar> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    MeanAxis { x: Var, axis: usize },
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    Expand { x: Var },
    Concat { xs: Vec<Var>, axis: usize },
    Select { x: Var, axis: usize, index: usize },
    Linear { x: Var, w: Var, b: Option<Var> },
    Bmm { a: Var, b: Var, trans_b: bool },
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: Conv2dGeom },
    MaxPool2d { x: Var, argmax: Vec<usize> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, training: bool },
    Relu(Var),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Softmax { x: Var, axis: usize },
    Dropout { x: Var, mask: Vec<T> },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<T> },
    Custom { inputs: Vec<Var>, backward: CustomBackward<T> },
}

impl<T: Scalar> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Mul(a, b) => vec![*a, *b],
            Scale(x, _) | Sum(x) | Reshape(x) | Relu(x) | Gelu(x) => vec![*x],
            MeanAxis { x, .. }
            | Permute { x, .. }
            | Expand { x }
            | Select { x, .. }
            | MaxPool2d { x, .. }
            | Softmax { x, .. }
            | Dropout { x, .. } => vec![*x],
            Concat { xs, .. } => xs.clone(),
            Linear { x, w, b } | Conv2d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Bmm { a, b, .. } => vec![*a, *b],
            BatchNorm { x, gamma, beta, .. } | LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            CrossEntropy { logits, .. } => vec![*logits],
            Custom { inputs, .. } => inputs.clone(),
        }
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// One training or inference session's computation tape.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    mode: Mode,
    rng: ChaCha8Rng,
    check_finite: bool,
    params: IndexMap<String, Var>,
    backward_done: bool,
    attention_probe: Option<Vec<Tensor<T>>>,
}

impl<T: Scalar> Graph<T> {
    /// `seed` drives dropout masks; non-finite checks follow `debug_assertions`.
    pub fn new(mode: Mode, seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            check_finite: cfg!(debug_assertions),
            params: IndexMap::new(),
            backward_done: false,
            attention_probe: None,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_training(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant (no gradient).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    /// Binds a named trainable parameter, reusing the binding on repeat calls.
    /// Non-trainable entries (running statistics) are bound as constants.
    pub fn param(&mut self, params: &ModelParams<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let entry = params.entry(name).ok_or_else(|| TensorError::MissingParam(name.to_string()))?;
        let v = self.leaf(entry.tensor.clone(), entry.trainable);
        if entry.trainable {
            self.params.insert(name.to_string(), v);
        }
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradients of every bound parameter that received one.
    pub fn param_grads(&self) -> Gradients<T> {
        let mut out = Gradients::new();
        for (name, &v) in &self.params {
            if let Some(g) = &self.nodes[v.0].grad {
                out.insert(name.clone(), g.clone());
            }
        }
        out
    }

    pub fn bound_params(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Clears all gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    /// Starts collecting a copy of every attention-weight matrix computed.
    pub fn enable_attention_probe(&mut self) {
        self.attention_probe = Some(Vec::new());
    }

    pub fn take_attention_probe(&mut self) -> Vec<Tensor<T>> {
        self.attention_probe.take().unwrap_or_default()
    }

    /// Registers an op with a caller-supplied backward rule.
    pub fn custom(&mut self, name: &'static str, inputs: &[Var], value: Tensor<T>, backward: CustomBackward<T>) -> Result<Var> {
        self.push(name, value, Op::Custom { inputs: inputs.to_vec(), backward })
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if self.check_finite && !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Populates `grad` for every tracked value reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::Backward("second backward without reset_grads".into()));
        }
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(TensorError::Backward(format!("loss must be scalar, got shape {:?}", lv.shape())));
        }
        if !self.nodes[loss.0].requires_grad {
            return Err(TensorError::Backward("loss does not depend on any tracked tensor".into()));
        }
        self.nodes[loss.0].grad = Some(Tensor::full(lv.shape(), T::one()));
        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) || !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gout) = self.nodes[i].grad.take() else { continue };
            let contributions = self.backward_node(i, &gout)?;
            self.nodes[i].grad = Some(gout);
            for (v, g) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                if self.check_finite && !g.is_finite() {
                    return Err(TensorError::NonFinite { op: "backward" });
                }
                match &mut self.nodes[v.0].grad {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        self.backward_done = true;
        Ok(())
    }

    fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
