use super::ops::{self, OpKind};
use super::{AutodiffError, Tensor};
use crate::Real;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Node<T> {
    op: Option<(OpKind, Vec<usize>)>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Wengert list of primitive applications.
///
/// Nodes are appended in evaluation order, so every input precedes its
/// consumers. Leaves are created with [`Tape::var`]; a node requires a
/// gradient iff any of its inputs does. The tape can be differentiated any
/// number of times; [`Tape::backward`] does not consume it.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Gradients are tracked when `t.requires_grad` is set.
    pub fn var(&mut self, t: Tensor<T>) -> Var {
        let requires_grad = t.requires_grad;
        self.nodes.push(Node {
            op: None,
            value: t,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor<T>) -> Var {
        t.requires_grad = false;
        self.var(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var, AutodiffError> {
        let mut value = {
            let refs: Vec<&Tensor<T>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            ops::forward(&kind, &refs)?
        };
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        value.requires_grad = requires_grad;
        self.nodes.push(Node {
            op: Some((kind, inputs.iter().map(|v| v.0).collect())),
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::MatMul, &[a, b])
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Add, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Mul, &[a, b])
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Div, &[a, b])
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Scale(c), &[a])
    }
    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Tanh, &[a])
    }
    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Sigmoid, &[a])
    }
    pub fn leaky_relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::LeakyRelu, &[a])
    }
    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Exp, &[a])
    }
    pub fn sqrt(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Sqrt, &[a])
    }
    pub fn square(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Square, &[a])
    }
    pub fn clamp_min(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.apply(OpKind::ClampMin(c), &[a])
    }
    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Sum, &[a])
    }
    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Mean, &[a])
    }
    pub fn norm(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Norm, &[a])
    }
    pub fn max_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::MaxRows, &[a])
    }
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Concat { axis }, parts)
    }
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Slice { axis, start, end }, &[a])
    }
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Reshape(shape.to_vec()), &[a])
    }
    pub fn gather_cols(&mut self, a: Var, indices: Vec<usize>) -> Result<Var, AutodiffError> {
        self.apply(OpKind::GatherCols(indices), &[a])
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, AutodiffError> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss {
                shape: root.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            let Some((kind, inputs)) = &node.op else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let needs: Vec<bool> = inputs.iter().map(|&i| self.nodes[i].requires_grad).collect();
            let refs: Vec<&Tensor<T>> = inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let input_grads = ops::backward(kind, &refs, &node.value, &g, &needs);
            for ((&i, need), ig) in inputs.iter().zip(&needs).zip(input_grads) {
                let (true, Some(ig)) = (*need, ig) else { continue };
                match &mut grads[i] {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&ig) {
                            *a = *a + *b;
                        }
                    }
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                let node = &self.nodes[id];
                if node.op.is_none() && node.requires_grad {
                    g.map(|g| Tensor::new(node.value.shape().to_vec(), g).expect("gradient shape"))
                } else {
                    None
                }
            })
            .collect();
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    /// Recomputes every recorded node from the stored leaves.
    pub fn replay(&self) -> Result<Vec<Tensor<T>>, AutodiffError> {
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                None => node.value.clone(),
                Some((kind, inputs)) => {
                    let refs: Vec<&Tensor<T>> = inputs.iter().map(|&i| &values[i]).collect();
                    let mut v = ops::forward(kind, &refs)?;
                    v.requires_grad = node.requires_grad;
                    v
                }
            };
            values.push(v);
        }
        Ok(values)
    }
}

/// Gradients of a scalar with respect to the leaves of a tape.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for a leaf; zeros when the leaf was not reached.
    pub fn get(&self, v: Var) -> Tensor<T> {
        match self.grads.get(v.0) {
            Some(Some(g)) => g.clone(),
            _ => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Moves the gradient out, leaving zeros behind.
    pub fn take(&mut self, v: Var) -> Tensor<T> {
        match self.grads.get_mut(v.0).and_then(Option::take) {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}
