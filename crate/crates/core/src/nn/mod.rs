//! Parameterized layers, initialization, Adam, and parameter checkpoints.
//!
//! Parameters live in a flat [`ParamSet`]; layers hold [`ParamId`] handles
//! into it. A forward pass first binds the set onto a tape, then layers look
//! up their [`Var`]s through the resulting [`Bound`].

mod adam;
mod checkpoint;
mod init;
mod layers;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{ParamManifest, TensorRecord};
pub use init::Initializer;
pub use layers::{
    conv_stack_forward, Activation, ConvLayer, DenseLayer, Embedding, GruCell, GruInputs,
};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::config(format!("duplicate parameter name {name}")));
        }
        self.names.push(name);
        self.tensors.push(t.with_requires_grad(true));
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Clones of every tensor in set order.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.tensors.clone()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Pushes every parameter onto `tape`, as trainable leaves when
    /// `trainable` is set and as constants otherwise.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        Bound(vars)
    }
}

/// A [`ParamSet`] as it sits on one tape.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    /// Wraps vars already on a tape, in [`ParamSet`] order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound(vars)
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    /// Gradients of every parameter after a backward pass, in set order.
    pub fn grads(&self, tape: &Tape) -> Vec<Vec<f64>> {
        self.0.iter().map(|&v| tape.grad_or_zeros(v)).collect()
    }
}
