use serde::{Deserialize, Serialize};

use super::{Bound, Initializer, ParamId, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{Padding, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Selu,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Selu => tape.selu(x),
            Activation::Identity => Ok(x),
        }
    }
}

/// `act(x W + b)` on the rows of `x`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    pub inputs: usize,
    pub outputs: usize,
}

impl DenseLayer {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        inputs: usize,
        outputs: usize,
        activation: Activation,
    ) -> Result<Self> {
        check_positive(name, &[inputs, outputs])?;
        let weight = params.add(
            format!("{name}.weight"),
            init.fan_in_uniform(&[inputs, outputs], inputs),
        )?;
        let bias = params.add(format!("{name}.bias"), init.zeros(&[outputs]))?;
        Ok(Self {
            weight,
            bias,
            activation,
            inputs,
            outputs,
        })
    }

    /// `x` is `[rows, inputs]`; returns `[rows, outputs]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(x, p.var(self.weight))?;
        let y = tape.add_row_bias(y, p.var(self.bias))?;
        self.activation.apply(tape, y)
    }
}

/// One selu-activated convolution.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub kernels: ParamId,
    pub bias: ParamId,
    pub padding: Padding,
    pub size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvLayer {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        size: usize,
        in_channels: usize,
        out_channels: usize,
        padding: Padding,
    ) -> Result<Self> {
        check_positive(name, &[size, in_channels, out_channels])?;
        if padding == Padding::Same && size % 2 == 0 {
            return Err(Error::config(format!(
                "{name}: same padding needs an odd kernel, got {size}"
            )));
        }
        let fan_in = size * size * in_channels;
        let kernels = params.add(
            format!("{name}.kernels"),
            init.fan_in_uniform(&[size, size, in_channels, out_channels], fan_in),
        )?;
        let bias = params.add(format!("{name}.bias"), init.zeros(&[out_channels]))?;
        Ok(Self {
            kernels,
            bias,
            padding,
            size,
            in_channels,
            out_channels,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        self.forward_with(tape, p, x, self.padding)
    }

    /// Like [`ConvLayer::forward`] with the padding overridden.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        p: &Bound,
        x: Var,
        padding: Padding,
    ) -> Result<Var> {
        let y = tape.conv2d(x, p.var(self.kernels), p.var(self.bias), padding)?;
        tape.selu(y)
    }

    /// Cells of border lost on each side by a valid convolution.
    pub fn radius(&self) -> usize {
        (self.size - 1) / 2
    }
}

/// Applies `layers` in order to an `[M, N, C]` frame.
pub fn conv_stack_forward(
    tape: &mut Tape,
    p: &Bound,
    layers: &[ConvLayer],
    input: Var,
) -> Result<Var> {
    let mut channels = match tape.shape(input) {
        [_, _, c] => *c,
        s => {
            return Err(Error::dim(format!(
                "conv stack input must be [M, N, C], got {s:?}"
            )))
        }
    };
    let mut x = input;
    for (k, layer) in layers.iter().enumerate() {
        if layer.in_channels != channels {
            return Err(Error::config(format!(
                "conv layer {k} expects {} input channels, got {channels}",
                layer.in_channels
            )));
        }
        x = layer.forward(tape, p, x)?;
        channels = layer.out_channels;
    }
    Ok(x)
}

/// Gated recurrent unit with
/// `z = σ(x W_z + h U_z + b_z)`, `r = σ(x W_r + h U_r + b_r)`,
/// `h~ = tanh(x W_h + (r ⊙ h) U_h + b_h)`, `h' = (1 - z) ⊙ h + z ⊙ h~`.
///
/// Inputs and states are row-batched: `x` is `[B, input]`, `h` is `[B, hidden]`.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

/// Input projections `x W + b` for each gate.
#[derive(Debug, Clone, Copy)]
pub struct GruInputs {
    pub z: Var,
    pub r: Var,
    pub h: Var,
}

impl GruCell {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        input_dim: usize,
        hidden: usize,
    ) -> Result<Self> {
        check_positive(name, &[input_dim, hidden])?;
        let mut w = |gate: &str| {
            params.add(
                format!("{name}.w_{gate}"),
                init.fan_in_uniform(&[input_dim, hidden], input_dim),
            )
        };
        let (w_z, w_r, w_h) = (w("z")?, w("r")?, w("h")?);
        let mut u = |gate: &str| {
            params.add(
                format!("{name}.u_{gate}"),
                init.fan_in_uniform(&[hidden, hidden], hidden),
            )
        };
        let (u_z, u_r, u_h) = (u("z")?, u("r")?, u("h")?);
        let mut b = |gate: &str| {
            params.add(
                format!("{name}.b_{gate}"),
                crate::tensor::Tensor::zeros(&[hidden]),
            )
        };
        let (b_z, b_r, b_h) = (b("z")?, b("r")?, b("h")?);
        Ok(Self {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z,
            b_r,
            b_h,
            input_dim,
            hidden,
        })
    }

    /// Gate input projections for `[rows, input_dim]` inputs.
    pub fn project(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<GruInputs> {
        let mut proj = |w: ParamId, b: ParamId| -> Result<Var> {
            let y = tape.matmul(x, p.var(w))?;
            tape.add_row_bias(y, p.var(b))
        };
        Ok(GruInputs {
            z: proj(self.w_z, self.b_z)?,
            r: proj(self.w_r, self.b_r)?,
            h: proj(self.w_h, self.b_h)?,
        })
    }

    /// Advances `h` given precomputed input projections of matching rows.
    pub fn step_projected(&self, tape: &mut Tape, p: &Bound, xp: GruInputs, h: Var) -> Result<Var> {
        let hz = tape.matmul(h, p.var(self.u_z))?;
        let z = tape.add(xp.z, hz)?;
        let z = tape.sigmoid(z)?;
        let hr = tape.matmul(h, p.var(self.u_r))?;
        let r = tape.add(xp.r, hr)?;
        let r = tape.sigmoid(r)?;
        let rh = tape.mul(r, h)?;
        let hh = tape.matmul(rh, p.var(self.u_h))?;
        let cand = tape.add(xp.h, hh)?;
        let cand = tape.tanh(cand)?;
        // (1 - z) h + z h~ = h + z (h~ - h)
        let delta = tape.sub(cand, h)?;
        let dz = tape.mul(z, delta)?;
        tape.add(h, dz)
    }

    pub fn step(&self, tape: &mut Tape, p: &Bound, x: Var, h: Var) -> Result<Var> {
        let xp = self.project(tape, p, x)?;
        self.step_projected(tape, p, xp, h)
    }

    /// Runs the cell over a step-major `[T * batch, input_dim]` sequence
    /// (rows `t * batch .. (t + 1) * batch` hold step `t`) and returns the
    /// `[batch, hidden]` state after every step. `h0` defaults to zeros.
    pub fn unroll(
        &self,
        tape: &mut Tape,
        p: &Bound,
        inputs: Var,
        batch: usize,
        h0: Option<Var>,
    ) -> Result<Vec<Var>> {
        let rows = match tape.shape(inputs) {
            [r, c] if *c == self.input_dim => *r,
            s => {
                return Err(Error::dim(format!(
                    "gru inputs must be [rows, {}], got {s:?}",
                    self.input_dim
                )))
            }
        };
        if batch == 0 || rows % batch != 0 {
            return Err(Error::contract(format!(
                "{rows} input rows do not split into batches of {batch}"
            )));
        }
        let steps = rows / batch;
        let mut h = match h0 {
            Some(h) => {
                if tape.shape(h) != [batch, self.hidden] {
                    return Err(Error::dim(format!(
                        "initial state must be [{batch}, {}], got {:?}",
                        self.hidden,
                        tape.shape(h)
                    )));
                }
                h
            }
            None => tape.constant(crate::tensor::Tensor::zeros(&[batch, self.hidden])),
        };
        let all = self.project(tape, p, inputs)?;
        let mut states = Vec::with_capacity(steps);
        for t in 0..steps {
            let xp = if steps == 1 {
                all
            } else {
                let ids: Vec<usize> = (t * batch..(t + 1) * batch).collect();
                GruInputs {
                    z: tape.gather_rows(all.z, &ids)?,
                    r: tape.gather_rows(all.r, &ids)?,
                    h: tape.gather_rows(all.h, &ids)?,
                }
            };
            h = self.step_projected(tape, p, xp, h)?;
            states.push(h);
        }
        Ok(states)
    }
}

/// Lookup table mapping categorical ids to learned vectors.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        vocab: usize,
        dim: usize,
    ) -> Result<Self> {
        check_positive(name, &[vocab, dim])?;
        let table = params.add(
            format!("{name}.table"),
            init.uniform(&[vocab, dim], 3f64.sqrt()),
        )?;
        Ok(Self { table, vocab, dim })
    }

    /// `[ids.len(), dim]` rows of the table.
    pub fn lookup(&self, tape: &mut Tape, p: &Bound, ids: &[usize]) -> Result<Var> {
        tape.gather_rows(p.var(self.table), ids)
    }
}

fn check_positive(name: &str, dims: &[usize]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::config(format!(
            "{name}: dimensions must be positive, got {dims:?}"
        )));
    }
    Ok(())
}
