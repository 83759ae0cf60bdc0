use super::gemm::{chunk_images, gemm_acc, ConvGeom};
use super::numel;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// SELU scale.
pub const SELU_LAMBDA: f64 = 1.0507;
/// SELU negative-branch saturation.
pub const SELU_ALPHA: f64 = 1.67326;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding so the output keeps the input's spatial extent (odd kernels).
    Same,
    /// No padding; output shrinks by `k - 1` per axis.
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Sigmoid,
    Tanh,
    Selu,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        kernels: Var,
        bias: Var,
        pad: usize,
    },
    Binary(BinaryOp, Var, Var),
    Unary(UnaryOp, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MaxScalar(Var, f64),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    SliceSpot {
        grid: Var,
        row: usize,
        col: usize,
    },
    Reshape(Var),
    Transpose(Var),
    Row(Var, usize),
    AddRowBias(Var, Var),
    Sum(Var),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    Crop {
        input: Var,
        top: isize,
        left: isize,
    },
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Conv2d { .. } => "conv2d",
            Op::Binary(BinaryOp::Add, ..) => "add",
            Op::Binary(BinaryOp::Sub, ..) => "sub",
            Op::Binary(BinaryOp::Mul, ..) => "mul",
            Op::Binary(BinaryOp::Div, ..) => "div",
            Op::Unary(UnaryOp::Sigmoid, _) => "sigmoid",
            Op::Unary(UnaryOp::Tanh, _) => "tanh",
            Op::Unary(UnaryOp::Selu, _) => "selu",
            Op::Unary(UnaryOp::Abs, _) => "abs",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MaxScalar(..) => "max_scalar",
            Op::Concat { .. } => "concat",
            Op::SliceSpot { .. } => "slice_spot",
            Op::Reshape(_) => "reshape",
            Op::Transpose(_) => "transpose",
            Op::Row(..) => "row",
            Op::AddRowBias(..) => "add_row_bias",
            Op::Sum(_) => "sum",
            Op::GatherRows { .. } => "gather_rows",
            Op::Crop { .. } => "crop",
        }
    }

    pub(crate) fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Binary(_, a, b) | Op::AddRowBias(a, b) => vec![*a, *b],
            Op::Conv2d {
                input,
                kernels,
                bias,
                ..
            } => vec![*input, *kernels, *bias],
            Op::Unary(_, a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::MaxScalar(a, _)
            | Op::Reshape(a)
            | Op::Transpose(a)
            | Op::Row(a, _)
            | Op::Sum(a) => vec![*a],
            Op::Concat { parts, .. } => parts.clone(),
            Op::SliceSpot { grid, .. } => vec![*grid],
            Op::GatherRows { table, .. } => vec![*table],
            Op::Crop { input, .. } => vec![*input],
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn selu(x: f64) -> f64 {
    if x >= 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

fn is_scalar_shape(shape: &[usize]) -> bool {
    numel(shape) == 1
}

impl Tape {
    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::dim(format!(
                "{what} expects a matrix, got shape {s:?}"
            ))),
        }
    }

    /// Matrix product of `[p, q]` and `[q, r]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.matrix_dims(a, "matmul")?;
        let (q2, r) = self.matrix_dims(b, "matmul")?;
        if q != q2 {
            return Err(Error::dim(format!(
                "matmul inner dimensions differ: {:?} x {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = vec![0.0; p * r];
        gemm_acc(
            p,
            q,
            r,
            self.value(a),
            false,
            self.value(b),
            false,
            &mut out,
        );
        self.push(Op::MatMul(a, b), vec![p, r], out)
    }

    /// Stride-1 cross-correlation of an `[H, W, C_in]` image, or a batch of
    /// them shaped `[N, H, W, C_in]`, with `[k, k, C_in, C_out]` kernels plus a
    /// `[C_out]` bias. The kernel is not flipped.
    pub fn conv2d(&mut self, input: Var, kernels: Var, bias: Var, padding: Padding) -> Result<Var> {
        let (n, h, w, cin) = match self.shape(input) {
            [h, w, c] => (1, *h, *w, *c),
            [n, h, w, c] => (*n, *h, *w, *c),
            s => {
                return Err(Error::dim(format!(
                    "conv2d input must be [H, W, C] or [N, H, W, C], got {s:?}"
                )))
            }
        };
        let batched = self.shape(input).len() == 4;
        let (k, kcin, cout) = match self.shape(kernels) {
            [k1, k2, ci, co] if k1 == k2 => (*k1, *ci, *co),
            s => {
                return Err(Error::dim(format!(
                    "conv2d kernels must be [k, k, C_in, C_out], got {s:?}"
                )))
            }
        };
        if kcin != cin {
            return Err(Error::dim(format!(
                "conv2d channel mismatch: input {:?}, kernels {:?}",
                self.shape(input),
                self.shape(kernels)
            )));
        }
        if self.shape(bias) != [cout] {
            return Err(Error::dim(format!(
                "conv2d bias must be [{cout}], got {:?}",
                self.shape(bias)
            )));
        }
        let pad = match padding {
            Padding::Same if k % 2 == 1 => (k - 1) / 2,
            Padding::Same => {
                return Err(Error::dim(format!(
                    "same padding needs an odd kernel, got {k}"
                )))
            }
            Padding::Valid => 0,
        };
        if k > h + 2 * pad || k > w + 2 * pad {
            return Err(Error::dim(format!(
                "kernel {k}x{k} larger than padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        let oh = h + 2 * pad - k + 1;
        let ow = w + 2 * pad - k + 1;
        let geom = ConvGeom {
            h,
            w,
            cin,
            k,
            pad,
            oh,
            ow,
        };
        let x = self.value(input);
        let kv = self.value(kernels);
        let bv = self.value(bias);
        let mut out = Vec::with_capacity(n * oh * ow * cout);
        for _ in 0..n * oh * ow {
            out.extend_from_slice(bv);
        }
        let (isz, osz) = (h * w * cin, oh * ow * cout);
        let step = chunk_images(&geom);
        let mut cols = Vec::new();
        for first in (0..n).step_by(step) {
            let last = (first + step).min(n);
            cols.clear();
            for img in first..last {
                geom.im2col(&x[img * isz..(img + 1) * isz], &mut cols);
            }
            let rows = (last - first) * oh * ow;
            gemm_acc(
                rows,
                geom.patch(),
                cout,
                &cols,
                false,
                kv,
                false,
                &mut out[first * osz..last * osz],
            );
        }
        let shape = if batched {
            vec![n, oh, ow, cout]
        } else {
            vec![oh, ow, cout]
        };
        self.push(
            Op::Conv2d {
                input,
                kernels,
                bias,
                pad,
            },
            shape,
            out,
        )
    }

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let out_shape = if sa == sb {
            sa
        } else if is_scalar_shape(&sb) {
            sa
        } else if is_scalar_shape(&sa) {
            sb
        } else {
            return Err(Error::dim(format!(
                "{op:?} operands differ in shape: {sa:?} vs {sb:?}"
            )));
        };
        let av = self.value(a);
        let bv = self.value(b);
        let n = numel(&out_shape);
        let ai = |i: usize| if av.len() == 1 { av[0] } else { av[i] };
        let bi = |i: usize| if bv.len() == 1 { bv[0] } else { bv[i] };
        let out: Vec<f64> = (0..n)
            .map(|i| match op {
                BinaryOp::Add => ai(i) + bi(i),
                BinaryOp::Sub => ai(i) - bi(i),
                BinaryOp::Mul => ai(i) * bi(i),
                BinaryOp::Div => ai(i) / bi(i),
            })
            .collect();
        self.push(Op::Binary(op, a, b), out_shape, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b)
    }

    pub fn unary(&mut self, op: UnaryOp, a: Var) -> Result<Var> {
        let f: fn(f64) -> f64 = match op {
            UnaryOp::Sigmoid => sigmoid,
            UnaryOp::Tanh => f64::tanh,
            UnaryOp::Selu => selu,
            UnaryOp::Abs => f64::abs,
        };
        let out: Vec<f64> = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Unary(op, a), shape, out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Tanh, a)
    }

    pub fn selu(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Selu, a)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Abs, a)
    }

    /// `c * a` for a constant `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out: Vec<f64> = self.value(a).iter().map(|&x| c * x).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Scale(a, c), shape, out)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out: Vec<f64> = self.value(a).iter().map(|&x| x + c).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::AddScalar(a), shape, out)
    }

    /// Elementwise `max(a, floor)`; the gradient flows only where `a > floor`.
    pub fn max_scalar(&mut self, a: Var, floor: f64) -> Result<Var> {
        let out: Vec<f64> = self.value(a).iter().map(|&x| x.max(floor)).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::MaxScalar(a, floor), shape, out)
    }

    /// Joins tensors along `axis`; every other extent must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::contract("concat of zero parts"));
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim(format!(
                "concat axis {axis} out of range for {base:?}"
            )));
        }
        let mut axis_len = 0;
        for &p in parts {
            let s = self.shape(p);
            let same_sides = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !same_sides {
                return Err(Error::dim(format!(
                    "concat along axis {axis}: shape {s:?} does not match {base:?}"
                )));
            }
            axis_len += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * axis_len * inner);
        for o in 0..outer {
            for &p in parts {
                let block = self.shape(p)[axis] * inner;
                out.extend_from_slice(&self.value(p)[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = axis_len;
        self.push(
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            shape,
            out,
        )
    }

    /// The channel vector at one cell of an `[M, N, C]` grid.
    pub fn slice_spot(&mut self, grid: Var, row: usize, col: usize) -> Result<Var> {
        let (m, n, c) = match self.shape(grid) {
            [m, n, c] => (*m, *n, *c),
            s => {
                return Err(Error::dim(format!(
                    "slice_spot expects [M, N, C], got {s:?}"
                )))
            }
        };
        if row >= m || col >= n {
            return Err(Error::Bounds(format!(
                "spot ({row}, {col}) outside {m}x{n} grid"
            )));
        }
        let base = (row * n + col) * c;
        let out = self.value(grid)[base..base + c].to_vec();
        self.push(Op::SliceSpot { grid, row, col }, vec![c], out)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(a).len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(a)
            )));
        }
        let out = self.value(a).to_vec();
        self.push(Op::Reshape(a), shape.to_vec(), out)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims(a, "transpose")?;
        let av = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av[i * c + j];
            }
        }
        self.push(Op::Transpose(a), vec![c, r], out)
    }

    /// Row `i` of a matrix, as a `[1, cols]` matrix.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims(a, "row")?;
        if i >= r {
            return Err(Error::Bounds(format!("row {i} of a {r}-row matrix")));
        }
        let out = self.value(a)[i * c..(i + 1) * c].to_vec();
        self.push(Op::Row(a, i), vec![1, c], out)
    }

    /// Adds a `[cols]` bias to every row of a `[rows, cols]` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims(x, "add_row_bias")?;
        if self.shape(bias) != [c] {
            return Err(Error::dim(format!(
                "row bias must be [{c}], got {:?}",
                self.shape(bias)
            )));
        }
        let xv = self.value(x);
        let bv = self.value(bias);
        let mut out = xv.to_vec();
        for i in 0..r {
            for (o, b) in out[i * c..(i + 1) * c].iter_mut().zip(bv) {
                *o += b;
            }
        }
        self.push(Op::AddRowBias(x, bias), vec![r, c], out)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().sum();
        self.push(Op::Sum(a), vec![], vec![s])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Selects rows of a `[V, D]` table, producing `[ids.len(), D]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.matrix_dims(table, "gather_rows")?;
        if ids.is_empty() {
            return Err(Error::contract("gather_rows with no ids"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Bounds(format!("id {bad} outside vocabulary of {v}")));
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        self.push(
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            vec![ids.len(), d],
            out,
        )
    }

    /// An `[h, w, C]` window of an `[H, W, C]` image whose top-left corner sits
    /// at (`top`, `left`), which may lie outside the image. Cells outside the
    /// image read as zero.
    pub fn crop(&mut self, input: Var, top: isize, left: isize, h: usize, w: usize) -> Result<Var> {
        let (ih, iw, c) = match self.shape(input) {
            [a, b, c] => (*a, *b, *c),
            s => return Err(Error::dim(format!("crop expects [H, W, C], got {s:?}"))),
        };
        if h == 0 || w == 0 {
            return Err(Error::dim("crop window must be non-empty"));
        }
        let x = self.value(input);
        let mut out = vec![0.0; h * w * c];
        for y in 0..h {
            let iy = top + y as isize;
            if iy < 0 || iy >= ih as isize {
                continue;
            }
            for xx in 0..w {
                let ix = left + xx as isize;
                if ix < 0 || ix >= iw as isize {
                    continue;
                }
                let src = (iy as usize * iw + ix as usize) * c;
                let dst = (y * w + xx) * c;
                out[dst..dst + c].copy_from_slice(&x[src..src + c]);
            }
        }
        self.push(Op::Crop { input, top, left }, vec![h, w, c], out)
    }

    pub(crate) fn backward_node(&self, idx: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (p, q) = (self.shape(*a)[0], self.shape(*a)[1]);
                let r = self.shape(*b)[1];
                if let Some(da) = self.adj_slot(adj, *a) {
                    gemm_acc(p, r, q, g, false, self.value(*b), true, da);
                }
                if let Some(db) = self.adj_slot(adj, *b) {
                    gemm_acc(q, p, r, self.value(*a), true, g, false, db);
                }
            }
            Op::Conv2d {
                input,
                kernels,
                bias,
                pad,
            } => self.conv2d_backward(*input, *kernels, *bias, *pad, &node.shape, g, adj),
            Op::Binary(op, a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let at = |i: usize| if av.len() == 1 { av[0] } else { av[i] };
                let bt = |i: usize| if bv.len() == 1 { bv[0] } else { bv[i] };
                let a_scalar = av.len() == 1 && g.len() != 1;
                let b_scalar = bv.len() == 1 && g.len() != 1;
                if let Some(da) = self.adj_slot(adj, *a) {
                    for (i, &gi) in g.iter().enumerate() {
                        let d = match op {
                            BinaryOp::Add | BinaryOp::Sub => gi,
                            BinaryOp::Mul => gi * bt(i),
                            BinaryOp::Div => gi / bt(i),
                        };
                        da[if a_scalar { 0 } else { i }] += d;
                    }
                }
                if let Some(db) = self.adj_slot(adj, *b) {
                    for (i, &gi) in g.iter().enumerate() {
                        let d = match op {
                            BinaryOp::Add => gi,
                            BinaryOp::Sub => -gi,
                            BinaryOp::Mul => gi * at(i),
                            BinaryOp::Div => -gi * at(i) / (bt(i) * bt(i)),
                        };
                        db[if b_scalar { 0 } else { i }] += d;
                    }
                }
            }
            Op::Unary(op, a) => {
                let x = self.value(*a);
                let y = &node.value;
                if let Some(da) = self.adj_slot(adj, *a) {
                    for i in 0..g.len() {
                        let d = match op {
                            UnaryOp::Sigmoid => y[i] * (1.0 - y[i]),
                            UnaryOp::Tanh => 1.0 - y[i] * y[i],
                            UnaryOp::Selu => {
                                if x[i] >= 0.0 {
                                    SELU_LAMBDA
                                } else {
                                    y[i] + SELU_LAMBDA * SELU_ALPHA
                                }
                            }
                            // Subgradient 0 at the kink.
                            UnaryOp::Abs => {
                                if x[i] > 0.0 {
                                    1.0
                                } else if x[i] < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                }
                            }
                        };
                        da[i] += g[i] * d;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(da) = self.adj_slot(adj, *a) {
                    da.iter_mut().zip(g).for_each(|(d, gi)| *d += c * gi);
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                if let Some(da) = self.adj_slot(adj, *a) {
                    da.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
                }
            }
            Op::MaxScalar(a, floor) => {
                let x = self.value(*a);
                if let Some(da) = self.adj_slot(adj, *a) {
                    for i in 0..g.len() {
                        if x[i] > *floor {
                            da[i] += g[i];
                        }
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let shape = &node.shape;
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let row = shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let block = self.shape(p)[*axis] * inner;
                    if let Some(dp) = self.adj_slot(adj, p) {
                        for o in 0..outer {
                            let src = &g[o * row + offset..o * row + offset + block];
                            for (d, s) in dp[o * block..(o + 1) * block].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    offset += block;
                }
            }
            Op::SliceSpot { grid, row, col } => {
                let n = self.shape(*grid)[1];
                let c = self.shape(*grid)[2];
                if let Some(dg) = self.adj_slot(adj, *grid) {
                    let base = (row * n + col) * c;
                    for (d, gi) in dg[base..base + c].iter_mut().zip(g) {
                        *d += gi;
                    }
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (self.shape(*a)[0], self.shape(*a)[1]);
                if let Some(da) = self.adj_slot(adj, *a) {
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::Row(a, i) => {
                let c = self.shape(*a)[1];
                if let Some(da) = self.adj_slot(adj, *a) {
                    for (d, gi) in da[i * c..(i + 1) * c].iter_mut().zip(g) {
                        *d += gi;
                    }
                }
            }
            Op::AddRowBias(x, b) => {
                let c = self.shape(*b)[0];
                if let Some(dx) = self.adj_slot(adj, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, gi)| *d += gi);
                }
                if let Some(db) = self.adj_slot(adj, *b) {
                    for grow in g.chunks(c) {
                        db.iter_mut().zip(grow).for_each(|(d, gi)| *d += gi);
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(da) = self.adj_slot(adj, *a) {
                    da.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::GatherRows { table, ids } => {
                let d = self.shape(*table)[1];
                if let Some(dt) = self.adj_slot(adj, *table) {
                    for (k, &i) in ids.iter().enumerate() {
                        for (dst, src) in dt[i * d..(i + 1) * d]
                            .iter_mut()
                            .zip(&g[k * d..(k + 1) * d])
                        {
                            *dst += src;
                        }
                    }
                }
            }
            Op::Crop { input, top, left } => {
                let (ih, iw, c) = {
                    let s = self.shape(*input);
                    (s[0], s[1], s[2])
                };
                let (h, w) = (node.shape[0], node.shape[1]);
                if let Some(di) = self.adj_slot(adj, *input) {
                    for y in 0..h {
                        let iy = top + y as isize;
                        if iy < 0 || iy >= ih as isize {
                            continue;
                        }
                        for xx in 0..w {
                            let ix = left + xx as isize;
                            if ix < 0 || ix >= iw as isize {
                                continue;
                            }
                            let dst = (iy as usize * iw + ix as usize) * c;
                            let src = (y * w + xx) * c;
                            for (d, s) in di[dst..dst + c].iter_mut().zip(&g[src..src + c]) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv2d_backward(
        &self,
        input: Var,
        kernels: Var,
        bias: Var,
        pad: usize,
        out_shape: &[usize],
        g: &[f64],
        adj: &mut [Option<Vec<f64>>],
    ) {
        let s = self.shape(input);
        let (h, w, cin) = (s[s.len() - 3], s[s.len() - 2], s[s.len() - 1]);
        let n = if s.len() == 4 { s[0] } else { 1 };
        let k = self.shape(kernels)[0];
        let r = out_shape.len();
        let (oh, ow, cout) = (out_shape[r - 3], out_shape[r - 2], out_shape[r - 1]);
        let x = self.value(input);
        let kv = self.value(kernels);

        if let Some(db) = self.adj_slot(adj, bias) {
            for gpix in g.chunks(cout) {
                db.iter_mut().zip(gpix).for_each(|(d, gi)| *d += gi);
            }
        }
        let need_input = self.requires_grad(input);
        let need_kernels = self.requires_grad(kernels);
        if !need_input && !need_kernels {
            return;
        }
        let geom = ConvGeom {
            h,
            w,
            cin,
            k,
            pad,
            oh,
            ow,
        };
        let mut dx = need_input.then(|| vec![0.0; x.len()]);
        let mut dk = need_kernels.then(|| vec![0.0; kv.len()]);
        let (isz, osz) = (h * w * cin, oh * ow * cout);
        let step = chunk_images(&geom);
        let mut cols = Vec::new();
        let mut dcols = Vec::new();
        for first in (0..n).step_by(step) {
            let last = (first + step).min(n);
            let rows = (last - first) * oh * ow;
            let gc = &g[first * osz..last * osz];
            if let Some(dk) = dk.as_mut() {
                cols.clear();
                for img in first..last {
                    geom.im2col(&x[img * isz..(img + 1) * isz], &mut cols);
                }
                gemm_acc(geom.patch(), rows, cout, &cols, true, gc, false, dk);
            }
            if let Some(dx) = dx.as_mut() {
                dcols.clear();
                dcols.resize(rows * geom.patch(), 0.0);
                gemm_acc(rows, cout, geom.patch(), gc, false, kv, true, &mut dcols);
                let per = oh * ow * geom.patch();
                for (c, img) in (first..last).enumerate() {
                    geom.col2im(
                        &dcols[c * per..(c + 1) * per],
                        &mut dx[img * isz..(img + 1) * isz],
                    );
                }
            }
        }
        if let (Some(dx), Some(slot)) = (dx, self.adj_slot(adj, input)) {
            slot.iter_mut().zip(dx).for_each(|(a, b)| *a += b);
        }
        if let (Some(dk), Some(slot)) = (dk, self.adj_slot(adj, kernels)) {
            slot.iter_mut().zip(dk).for_each(|(a, b)| *a += b);
        }
    }
}
