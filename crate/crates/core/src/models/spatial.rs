use crate::error::{Error, Result};
use crate::features::{SampleWindow, CHANNELS};
use crate::nn::{conv_stack_forward, Bound, ConvLayer, Initializer, ParamSet};
use crate::tensor::{Padding, Tape, Tensor, Var};

use super::ModelConfig;

/// K same-padded selu convolutions read at the target cell.
#[derive(Debug, Clone)]
pub(crate) struct Spatial {
    convs: Vec<ConvLayer>,
    radius: usize,
}

impl Spatial {
    pub fn new(params: &mut ParamSet, init: &mut Initializer, cfg: &ModelConfig) -> Result<Self> {
        let mut convs = Vec::with_capacity(cfg.conv_layers);
        let mut cin = CHANNELS;
        for k in 0..cfg.conv_layers {
            convs.push(ConvLayer::new(
                params,
                init,
                &format!("conv{k}"),
                cfg.kernel_size,
                cin,
                cfg.conv_channels,
                Padding::Same,
            )?);
            cin = cfg.conv_channels;
        }
        Ok(Self {
            convs,
            radius: cfg.receptive_radius(),
        })
    }

    /// f_t for every window and encoder step, step-major `[T * B, β]`.
    ///
    /// Only the (2R+1)² neighbourhood of the target cell can reach f_t, so
    /// each neighbourhood is cropped (zero outside the grid) and the batch of
    /// crops runs valid convolutions. After each layer, positions outside the
    /// grid are zeroed, which is what same padding feeds the next layer.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        windows: &[&SampleWindow],
        steps: usize,
    ) -> Result<Var> {
        if self.convs.is_empty() {
            return Ok(tape.constant(spot_matrix(windows, steps)));
        }
        let b = windows.len();
        let grid = &windows[0].data.grid;
        let (m, n) = (grid.rows as isize, grid.cols as isize);
        let r = self.radius as isize;
        let side = 2 * self.radius + 1;
        let crops = steps * b;
        let mut img = vec![0.0; crops * side * side * CHANNELS];
        for t in 0..steps {
            for (j, w) in windows.iter().enumerate() {
                let frame = w.frame(t);
                let (tr, tc) = w.cell();
                let base = (t * b + j) * side;
                for y in 0..side {
                    let gr = tr as isize - r + y as isize;
                    if gr < 0 || gr >= m {
                        continue;
                    }
                    for x in 0..side {
                        let gc = tc as isize - r + x as isize;
                        if gc < 0 || gc >= n {
                            continue;
                        }
                        let src = (gr as usize * n as usize + gc as usize) * CHANNELS;
                        let dst = ((base + y) * side + x) * CHANNELS;
                        img[dst..dst + CHANNELS].copy_from_slice(&frame[src..src + CHANNELS]);
                    }
                }
            }
        }
        let mut x = tape.constant(Tensor::new(vec![crops, side, side, CHANNELS], img)?);
        let mut cum = 0;
        let last = self.convs.len() - 1;
        for (k, layer) in self.convs.iter().enumerate() {
            x = layer.forward_with(tape, p, x, Padding::Valid)?;
            cum += layer.radius();
            if k < last {
                let mask = grid_mask(
                    windows,
                    steps,
                    side - 2 * cum,
                    cum,
                    self.radius,
                    (m, n),
                    layer.out_channels,
                )?;
                let mask = tape.constant(mask);
                x = tape.mul(x, mask)?;
            }
        }
        match tape.shape(x) {
            [c, 1, 1, beta] if *c == crops => {
                let beta = *beta;
                tape.reshape(x, &[crops, beta])
            }
            s => Err(Error::dim(format!(
                "spatial stage produced {s:?}, expected [{crops}, 1, 1, β]"
            ))),
        }
    }

    /// Same result as [`Spatial::forward`] by convolving every full frame.
    pub fn forward_full(
        &self,
        tape: &mut Tape,
        p: &Bound,
        windows: &[&SampleWindow],
        steps: usize,
    ) -> Result<Var> {
        if self.convs.is_empty() {
            return Ok(tape.constant(spot_matrix(windows, steps)));
        }
        let grid = &windows[0].data.grid;
        let mut rows = Vec::with_capacity(steps * windows.len());
        for t in 0..steps {
            for w in windows {
                let frame = Tensor::new(vec![grid.rows, grid.cols, CHANNELS], w.frame(t).to_vec())?;
                let x = tape.constant(frame);
                let y = conv_stack_forward(tape, p, &self.convs, x)?;
                let (r, c) = w.cell();
                let f = tape.slice_spot(y, r, c)?;
                let beta = tape.shape(f)[0];
                rows.push(tape.reshape(f, &[1, beta])?);
            }
        }
        tape.concat(&rows, 0)
    }
}

/// 1 where a position of each `width x width` crop map lies inside the grid.
fn grid_mask(
    windows: &[&SampleWindow],
    steps: usize,
    width: usize,
    cum: usize,
    radius: usize,
    (m, n): (isize, isize),
    channels: usize,
) -> Result<Tensor> {
    let b = windows.len();
    let crops = steps * b;
    let mut mask = vec![0.0; crops * width * width * channels];
    for crop in 0..crops {
        let (tr, tc) = windows[crop % b].cell();
        for y in 0..width {
            let gr = tr as isize - radius as isize + (cum + y) as isize;
            if gr < 0 || gr >= m {
                continue;
            }
            for x in 0..width {
                let gc = tc as isize - radius as isize + (cum + x) as isize;
                if gc < 0 || gc >= n {
                    continue;
                }
                let o = ((crop * width + y) * width + x) * channels;
                mask[o..o + channels].fill(1.0);
            }
        }
    }
    Tensor::new(vec![crops, width, width, channels], mask)
}

/// Target-cell channels, step-major `[T * B, CHANNELS]`.
pub(crate) fn spot_matrix(windows: &[&SampleWindow], steps: usize) -> Tensor {
    let mut data = Vec::with_capacity(steps * windows.len() * CHANNELS);
    for t in 0..steps {
        for w in windows {
            data.extend_from_slice(w.spot(t));
        }
    }
    Tensor::new(vec![steps * windows.len(), CHANNELS], data).expect("spot matrix shape")
}
