use super::ops::Op;
use super::{numel, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that made it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) struct Node {
    pub(crate) shape: Vec<usize>,
    pub(crate) value: Vec<f64>,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
    /// Accumulated gradient; only leaves keep one between backward calls.
    pub(crate) grad: Option<Vec<f64>>,
}

/// Ordered record of executed ops. Nodes are appended in execution order, so
/// every node's inputs precede it and a reverse sweep is a valid topological
/// traversal.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
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

    /// Pushes a leaf, honouring the tensor's own `requires_grad` flag.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let requires_grad = t.requires_grad();
        let shape = t.shape().to_vec();
        self.push_leaf(shape, t.into_data(), requires_grad)
    }

    /// Pushes a trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push_leaf(shape, t.into_data(), true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push_leaf(shape, t.into_data(), false)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.push_leaf(vec![], vec![value], false)
    }

    fn push_leaf(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>) -> Result<Var> {
        if let Some(_bad) = value.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: op.name() });
        }
        debug_assert_eq!(numel(&shape), value.len());
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a single-element node.
    pub fn item(&self, v: Var) -> Result<f64> {
        let n = &self.nodes[v.0];
        if n.value.len() != 1 {
            return Err(Error::contract(format!("item() on shape {:?}", n.shape)));
        }
        Ok(n.value[0])
    }

    /// Snapshot of a node as a [`Tensor`], including its accumulated gradient.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        let mut t = Tensor::new(n.shape.clone(), n.value.clone())
            .expect("tape nodes always hold consistent shapes")
            .with_requires_grad(n.requires_grad);
        t.set_grad(n.grad.clone());
        t
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Gradient of a leaf, or zeros if backward never reached it.
    pub fn grad_or_zeros(&self, v: Var) -> Vec<f64> {
        match &self.nodes[v.0].grad {
            Some(g) => g.clone(),
            None => vec![0.0; self.nodes[v.0].value.len()],
        }
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Propagates d(root)/d(leaf) into every leaf that requires grad.
    ///
    /// Leaf gradients accumulate across calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_node = &self.nodes[root.0];
        if root_node.value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                root_node.shape
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                let node = &mut self.nodes[idx];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.backward_node(idx, &g, &mut adj);
        }
        Ok(())
    }

    /// Mutable adjoint buffer for `v`, allocated on first touch. Returns
    /// `None` when `v` does not need a gradient.
    pub(crate) fn adj_slot<'a>(
        &self,
        adj: &'a mut [Option<Vec<f64>>],
        v: Var,
    ) -> Option<&'a mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let len = node.value.len();
        Some(adj[v.0].get_or_insert_with(|| vec![0.0; len]))
    }
}
