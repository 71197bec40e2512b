//! Reverse-mode autodiff tape.
//!
//! Every operation appends a node holding its forward value, its parent
//! indices, and whatever state the backward rule needs. [`Graph::backward`]
//! walks the tape in reverse and accumulates gradients into every node that
//! requires them; leaf gradients are then read back by the caller. The tape
//! is meant to be built, differentiated once, and dropped.

use crate::kernels::{self, LstmSaved};
use crate::tensor::Tensor;
use crate::{NumericError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActKind {
    Sigmoid,
    Tanh,
    Relu,
    /// Softmax over the last dimension, computed with max subtraction.
    Softmax,
}

/// Lower clamp used inside the fused binary cross-entropy node.
pub const BCE_CLAMP: f64 = 1e-7;

struct LstmNode {
    x: usize,
    wx: usize,
    wh: usize,
    b: usize,
    batch: usize,
    steps: usize,
    in_dim: usize,
    hidden: usize,
    reverse: bool,
    saved: LstmSaved,
}

enum Op {
    Leaf,
    Matmul { a: usize, b: usize },
    Add { a: usize, b: usize },
    /// Adds a vector over the last dimension of `a`.
    AddBias { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, c: f64 },
    AddScalar { a: usize },
    Transpose { a: usize },
    Reshape { a: usize },
    /// Repeats a vector as the rows of a matrix.
    BroadcastRows { a: usize },
    ConcatLast { parts: Vec<usize> },
    StackAxis0 { parts: Vec<usize> },
    SliceAxis0 { a: usize, index: usize },
    SwapAxes01 { a: usize },
    Act { a: usize, kind: ActKind },
    Sqrt { a: usize },
    Sum { a: usize },
    Conv1d { x: usize, w: usize, b: usize, stride: usize },
    Lstm(Box<LstmNode>),
    /// Per-channel normalization over the time axis of a [T×C] input.
    NormTime { x: usize, mean: Vec<f64>, inv_std: Vec<f64> },
    /// Summed binary cross-entropy against constant labels.
    BceSum { p: usize, labels: Vec<f64> },
}

struct Node {
    dims: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Enters a tensor into the graph, inheriting its `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(
            t.dims().to_vec(),
            t.data().to_vec(),
            t.requires_grad(),
            Op::Leaf,
        )
    }

    /// Enters a tensor that never receives a gradient.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.dims().to_vec(), t.data().to_vec(), false, Op::Leaf)
    }

    pub fn constant_from(&mut self, dims: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(dims, data)?;
        Ok(self.constant(&t))
    }

    pub fn dims(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].dims
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn value_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.nodes[v.0].dims.clone(), self.nodes[v.0].data.clone())
            .expect("node dims are consistent")
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, dims: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite value produced by a graph op"
        );
        self.nodes.push(Node { dims, data, grad: None, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    // ───────────────────────── forward ops ─────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (da, db) = (&self.nodes[a.0].dims, &self.nodes[b.0].dims);
        if da.len() != 2 || db.len() != 2 || da[1] != db[0] {
            return Err(NumericError::Shape(format!(
                "matmul: {:?} × {:?}",
                da, db
            )));
        }
        let (m, k, n) = (da[0], da[1], db[1]);
        let mut out = vec![0.0; m * n];
        kernels::matmul_acc(
            &self.nodes[a.0].data,
            &self.nodes[b.0].data,
            m,
            k,
            n,
            &mut out,
        );
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(vec![m, n], out, rg, Op::Matmul { a: a.0, b: b.0 }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.nodes[a.0].dims != self.nodes[b.0].dims {
            return Err(NumericError::Shape(format!(
                "add: {:?} vs {:?}",
                self.nodes[a.0].dims, self.nodes[b.0].dims
            )));
        }
        let out: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        let dims = self.nodes[a.0].dims.clone();
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(dims, out, rg, Op::Add { a: a.0, b: b.0 }))
    }

    /// a + bias, with bias broadcast over the last dimension.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let cols = *self.nodes[a.0].dims.last().unwrap_or(&0);
        if self.nodes[b.0].dims != [cols] {
            return Err(NumericError::Shape(format!(
                "add_bias: {:?} + {:?}",
                self.nodes[a.0].dims, self.nodes[b.0].dims
            )));
        }
        let bias = &self.nodes[b.0].data;
        let out: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .enumerate()
            .map(|(i, x)| x + bias[i % cols])
            .collect();
        let dims = self.nodes[a.0].dims.clone();
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(dims, out, rg, Op::AddBias { a: a.0, b: b.0 }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.nodes[a.0].dims != self.nodes[b.0].dims {
            return Err(NumericError::Shape("sub: dims differ".into()));
        }
        let out: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x - y)
            .collect();
        let dims = self.nodes[a.0].dims.clone();
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(dims, out, rg, Op::Sub { a: a.0, b: b.0 }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.nodes[a.0].dims != self.nodes[b.0].dims {
            return Err(NumericError::Shape("mul: dims differ".into()));
        }
        let out: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        let dims = self.nodes[a.0].dims.clone();
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(dims, out, rg, Op::Mul { a: a.0, b: b.0 }))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out: Vec<f64> = self.nodes[a.0].data.iter().map(|x| x * c).collect();
        let dims = self.nodes[a.0].dims.clone();
        let rg = self.nodes[a.0].requires_grad;
        self.push(dims, out, rg, Op::Scale { a: a.0, c })
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out: Vec<f64> = self.nodes[a.0].data.iter().map(|x| x + c).collect();
        let dims = self.nodes[a.0].dims.clone();
        let rg = self.nodes[a.0].requires_grad;
        self.push(dims, out, rg, Op::AddScalar { a: a.0 })
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let d = &self.nodes[a.0].dims;
        if d.len() != 2 {
            return Err(NumericError::Shape(format!("transpose: rank {} input", d.len())));
        }
        let (r, c) = (d[0], d[1]);
        let src = &self.nodes[a.0].data;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(vec![c, r], out, rg, Op::Transpose { a: a.0 }))
    }

    pub fn reshape(&mut self, a: Var, dims: Vec<usize>) -> Result<Var> {
        let n: usize = dims.iter().product();
        if n != self.nodes[a.0].data.len() {
            return Err(NumericError::Shape(format!(
                "reshape: {:?} -> {:?}",
                self.nodes[a.0].dims, dims
            )));
        }
        let data = self.nodes[a.0].data.clone();
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(dims, data, rg, Op::Reshape { a: a.0 }))
    }

    /// Repeats vector `a` of length C as `rows` rows: output [rows×C].
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let d = &self.nodes[a.0].dims;
        if d.len() != 1 {
            return Err(NumericError::Shape("broadcast_rows: need rank-1 input".into()));
        }
        let c = d[0];
        let src = &self.nodes[a.0].data;
        let mut out = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            out.extend_from_slice(src);
        }
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(vec![rows, c], out, rg, Op::BroadcastRows { a: a.0 }))
    }

    /// Concatenates along the last dimension; all leading dims must match.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(NumericError::EmptySequence);
        }
        let lead = {
            let d = &self.nodes[parts[0].0].dims;
            d[..d.len() - 1].to_vec()
        };
        let rows: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let d = &self.nodes[p.0].dims;
            if d[..d.len() - 1] != lead[..] {
                return Err(NumericError::Shape("concat_last: leading dims differ".into()));
            }
            widths.push(*d.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, w) in parts.iter().zip(&widths) {
                let src = &self.nodes[p.0].data[r * w..(r + 1) * w];
                out.extend_from_slice(src);
            }
        }
        let mut dims = lead;
        dims.push(total);
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(dims, out, rg, Op::ConcatLast { parts: ids }))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack_axis0(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(NumericError::EmptySequence);
        }
        let inner = self.nodes[parts[0].0].dims.clone();
        let mut out = Vec::with_capacity(parts.len() * self.nodes[parts[0].0].data.len());
        for p in parts {
            if self.nodes[p.0].dims != inner {
                return Err(NumericError::Shape("stack_axis0: dims differ".into()));
            }
            out.extend_from_slice(&self.nodes[p.0].data);
        }
        let mut dims = vec![parts.len()];
        dims.extend_from_slice(&inner);
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(dims, out, rg, Op::StackAxis0 { parts: ids }))
    }

    pub fn slice_axis0(&mut self, a: Var, index: usize) -> Result<Var> {
        let d = &self.nodes[a.0].dims;
        if d.is_empty() || index >= d[0] {
            return Err(NumericError::Shape(format!(
                "slice_axis0: index {} of {:?}",
                index, d
            )));
        }
        let inner: usize = d[1..].iter().product();
        let dims = d[1..].to_vec();
        let data = self.nodes[a.0].data[index * inner..(index + 1) * inner].to_vec();
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(dims, data, rg, Op::SliceAxis0 { a: a.0, index }))
    }

    /// Swaps the first two axes of a rank-3 tensor.
    pub fn swap_axes01(&mut self, a: Var) -> Result<Var> {
        let d = &self.nodes[a.0].dims;
        if d.len() != 3 {
            return Err(NumericError::Shape(format!("swap_axes01: rank {} input", d.len())));
        }
        let (d0, d1, d2) = (d[0], d[1], d[2]);
        let src = &self.nodes[a.0].data;
        let mut out = vec![0.0; src.len()];
        for i in 0..d0 {
            for j in 0..d1 {
                let s = (i * d1 + j) * d2;
                let t = (j * d0 + i) * d2;
                out[t..t + d2].copy_from_slice(&src[s..s + d2]);
            }
        }
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(vec![d1, d0, d2], out, rg, Op::SwapAxes01 { a: a.0 }))
    }

    pub fn activation(&mut self, a: Var, kind: ActKind) -> Var {
        let src = &self.nodes[a.0].data;
        let out = match kind {
            ActKind::Sigmoid => src.iter().map(|&x| kernels::sigmoid(x)).collect(),
            ActKind::Tanh => src.iter().map(|x| x.tanh()).collect(),
            ActKind::Relu => src.iter().map(|x| x.max(0.0)).collect(),
            ActKind::Softmax => {
                let cols = *self.nodes[a.0].dims.last().unwrap_or(&1);
                let mut out = Vec::with_capacity(src.len());
                for row in src.chunks(cols.max(1)) {
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    out.extend(exps.iter().map(|e| e / z));
                }
                out
            }
        };
        let dims = self.nodes[a.0].dims.clone();
        let rg = self.nodes[a.0].requires_grad;
        self.push(dims, out, rg, Op::Act { a: a.0, kind })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, ActKind::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, ActKind::Tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, ActKind::Relu)
    }

    pub fn softmax_last(&mut self, a: Var) -> Var {
        self.activation(a, ActKind::Softmax)
    }

    /// Elementwise square root; inputs must be non-negative.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.nodes[a.0].data.iter().any(|&v| v < 0.0) {
            return Err(NumericError::Shape("sqrt of a negative value".into()));
        }
        let out: Vec<f64> = self.nodes[a.0].data.iter().map(|x| x.sqrt()).collect();
        let dims = self.nodes[a.0].dims.clone();
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(dims, out, rg, Op::Sqrt { a: a.0 }))
    }

    /// Sum of all entries, producing a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].data.iter().sum();
        let rg = self.nodes[a.0].requires_grad;
        self.push(vec![1], vec![s], rg, Op::Sum { a: a.0 })
    }

    /// 1-D convolution over time. x: [T×Cin], w: [W×Cin×Cout], b: [Cout].
    /// The kernel width must be odd so the zero padding is symmetric.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let dx = &self.nodes[x.0].dims;
        let dw = &self.nodes[w.0].dims;
        if dx.len() != 2 || dw.len() != 3 {
            return Err(NumericError::Shape("conv1d: x must be [T×Cin], w [W×Cin×Cout]".into()));
        }
        let (t, cin) = (dx[0], dx[1]);
        let (width, wcin, cout) = (dw[0], dw[1], dw[2]);
        if width % 2 == 0 {
            return Err(NumericError::Config(format!(
                "conv1d kernel width must be odd, got {}",
                width
            )));
        }
        if wcin != cin || self.nodes[b.0].dims != [cout] {
            return Err(NumericError::Shape("conv1d: channel dims disagree".into()));
        }
        if stride == 0 {
            return Err(NumericError::Config("conv1d stride must be >= 1".into()));
        }
        let t_out = t.div_ceil(stride);
        let mut out = vec![0.0; t_out * cout];
        kernels::conv1d_forward(
            &self.nodes[x.0].data,
            &self.nodes[w.0].data,
            &self.nodes[b.0].data,
            t,
            cin,
            cout,
            width,
            stride,
            &mut out,
        );
        let rg = self.rg(&[x.0, w.0, b.0]);
        Ok(self.push(
            vec![t_out, cout],
            out,
            rg,
            Op::Conv1d { x: x.0, w: w.0, b: b.0, stride },
        ))
    }

    /// Batched unidirectional LSTM pass: x [B×S×F] → y [B×S×H].
    pub fn lstm(&mut self, x: Var, wx: Var, wh: Var, b: Var, reverse: bool) -> Result<Var> {
        let dx = &self.nodes[x.0].dims;
        if dx.len() != 3 {
            return Err(NumericError::Shape("lstm: x must be [B×S×F]".into()));
        }
        let (batch, steps, in_dim) = (dx[0], dx[1], dx[2]);
        if steps == 0 || batch == 0 {
            return Err(NumericError::EmptySequence);
        }
        let dwx = &self.nodes[wx.0].dims;
        if dwx.len() != 2 || dwx[0] != in_dim || dwx[1] % 4 != 0 {
            return Err(NumericError::Shape(format!(
                "lstm: wx {:?} does not match input dim {}",
                dwx, in_dim
            )));
        }
        let hidden = dwx[1] / 4;
        if self.nodes[wh.0].dims != [hidden, 4 * hidden]
            || self.nodes[b.0].dims != [4 * hidden]
        {
            return Err(NumericError::Shape("lstm: wh/b dims disagree with wx".into()));
        }
        let mut y = vec![0.0; batch * steps * hidden];
        let saved = kernels::lstm_forward(
            &self.nodes[x.0].data,
            &self.nodes[wx.0].data,
            &self.nodes[wh.0].data,
            &self.nodes[b.0].data,
            batch,
            steps,
            in_dim,
            hidden,
            reverse,
            &mut y,
        );
        let rg = self.rg(&[x.0, wx.0, wh.0, b.0]);
        Ok(self.push(
            vec![batch, steps, hidden],
            y,
            rg,
            Op::Lstm(Box::new(LstmNode {
                x: x.0,
                wx: wx.0,
                wh: wh.0,
                b: b.0,
                batch,
                steps,
                in_dim,
                hidden,
                reverse,
                saved,
            })),
        ))
    }

    /// Normalizes each channel of a [T×C] input to zero mean and unit
    /// variance over the time axis.
    pub fn norm_time(&mut self, x: Var, eps: f64) -> Result<Var> {
        let d = &self.nodes[x.0].dims;
        if d.len() != 2 {
            return Err(NumericError::Shape("norm_time: need [T×C] input".into()));
        }
        let (t, c) = (d[0], d[1]);
        if t == 0 {
            return Err(NumericError::EmptySequence);
        }
        let src = &self.nodes[x.0].data;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for row in src.chunks(c) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= t as f64);
        for row in src.chunks(c) {
            for (j, &v) in row.iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
        let inv_std: Vec<f64> = var
            .iter()
            .map(|&v| 1.0 / (v / t as f64 + eps).sqrt())
            .collect();
        let mut out = vec![0.0; src.len()];
        for (ti, row) in src.chunks(c).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[ti * c + j] = (v - mean[j]) * inv_std[j];
            }
        }
        let rg = self.nodes[x.0].requires_grad;
        Ok(self.push(vec![t, c], out, rg, Op::NormTime { x: x.0, mean, inv_std }))
    }

    /// Summed binary cross-entropy between posteriors `p` and constant
    /// binary `labels` with the same shape. Posteriors are clamped to
    /// [BCE_CLAMP, 1−BCE_CLAMP] inside the loss.
    pub fn bce_sum(&mut self, p: Var, labels: &Tensor) -> Result<Var> {
        if self.nodes[p.0].dims != labels.dims() {
            return Err(NumericError::Shape(format!(
                "bce: posterior shape {:?} vs label shape {:?}",
                self.nodes[p.0].dims,
                labels.dims()
            )));
        }
        let mut loss = 0.0;
        for (&pv, &yv) in self.nodes[p.0].data.iter().zip(labels.data()) {
            let pc = pv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            loss -= yv * pc.ln() + (1.0 - yv) * (1.0 - pc).ln();
        }
        let rg = self.nodes[p.0].requires_grad;
        Ok(self.push(
            vec![1],
            vec![loss],
            rg,
            Op::BceSum { p: p.0, labels: labels.data().to_vec() },
        ))
    }

    // ───────────────────────── backward ─────────────────────────

    /// Runs reverse-mode accumulation from a scalar `loss`. Afterwards the
    /// gradient of every leaf that requires one is available via [`grad`].
    /// Gradients from multiple uses of the same tensor accumulate.
    ///
    /// [`grad`]: Graph::grad
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(NumericError::NonScalarLoss(self.nodes[loss.0].dims.clone()));
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad || self.nodes[id].grad.is_none() {
                continue;
            }
            let contributions = self.op_backward(id);
            for (pid, delta) in contributions {
                if !self.nodes[pid].requires_grad {
                    continue;
                }
                match &mut self.nodes[pid].grad {
                    Some(g) => {
                        for (gi, di) in g.iter_mut().zip(&delta) {
                            *gi += di;
                        }
                    }
                    None => self.nodes[pid].grad = Some(delta),
                }
            }
        }
        Ok(())
    }

    fn op_backward(&self, id: usize) -> Vec<(usize, Vec<f64>)> {
        let node = &self.nodes[id];
        let g = node.grad.as_deref().expect("caller checked grad presence");
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Matmul { a, b } => {
                let (m, k) = (self.nodes[*a].dims[0], self.nodes[*a].dims[1]);
                let n = self.nodes[*b].dims[1];
                let mut da = vec![0.0; m * k];
                let mut db = vec![0.0; k * n];
                kernels::matmul_nt_acc(g, &self.nodes[*b].data, m, n, k, &mut da);
                kernels::matmul_tn_acc(&self.nodes[*a].data, g, m, k, n, &mut db);
                vec![(*a, da), (*b, db)]
            }
            Op::Add { a, b } => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::AddBias { a, b } => {
                let cols = self.nodes[*b].data.len();
                let mut db = vec![0.0; cols];
                for (i, &gv) in g.iter().enumerate() {
                    db[i % cols] += gv;
                }
                vec![(*a, g.to_vec()), (*b, db)]
            }
            Op::Sub { a, b } => {
                let db: Vec<f64> = g.iter().map(|v| -v).collect();
                vec![(*a, g.to_vec()), (*b, db)]
            }
            Op::Mul { a, b } => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[*b].data)
                    .map(|(gv, bv)| gv * bv)
                    .collect();
                let db: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[*a].data)
                    .map(|(gv, av)| gv * av)
                    .collect();
                vec![(*a, da), (*b, db)]
            }
            Op::Scale { a, c } => vec![(*a, g.iter().map(|v| v * c).collect())],
            Op::AddScalar { a } => vec![(*a, g.to_vec())],
            Op::Transpose { a } => {
                let (r, c) = (node.dims[0], node.dims[1]);
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        da[j * r + i] = g[i * c + j];
                    }
                }
                vec![(*a, da)]
            }
            Op::Reshape { a } => vec![(*a, g.to_vec())],
            Op::BroadcastRows { a } => {
                let c = self.nodes[*a].data.len();
                let mut da = vec![0.0; c];
                for row in g.chunks(c) {
                    for (d, &v) in da.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                vec![(*a, da)]
            }
            Op::ConcatLast { parts } => {
                let total = *node.dims.last().unwrap();
                let rows = node.data.len() / total;
                let mut out = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for p in parts {
                    let w = *self.nodes[*p].dims.last().unwrap();
                    let mut dp = vec![0.0; rows * w];
                    for r in 0..rows {
                        dp[r * w..(r + 1) * w]
                            .copy_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    out.push((*p, dp));
                    offset += w;
                }
                out
            }
            Op::StackAxis0 { parts } => {
                let inner = node.data.len() / parts.len();
                parts
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (*p, g[i * inner..(i + 1) * inner].to_vec()))
                    .collect()
            }
            Op::SliceAxis0 { a, index } => {
                let mut da = vec![0.0; self.nodes[*a].data.len()];
                let inner = node.data.len();
                da[index * inner..(index + 1) * inner].copy_from_slice(g);
                vec![(*a, da)]
            }
            Op::SwapAxes01 { a } => {
                // node dims are [d1, d0, d2]; parent is [d0, d1, d2]
                let (d1, d0, d2) = (node.dims[0], node.dims[1], node.dims[2]);
                let mut da = vec![0.0; g.len()];
                for j in 0..d1 {
                    for i in 0..d0 {
                        let s = (j * d0 + i) * d2;
                        let t = (i * d1 + j) * d2;
                        da[t..t + d2].copy_from_slice(&g[s..s + d2]);
                    }
                }
                vec![(*a, da)]
            }
            Op::Act { a, kind } => {
                let y = &node.data;
                let da: Vec<f64> = match kind {
                    ActKind::Sigmoid => g
                        .iter()
                        .zip(y)
                        .map(|(gv, yv)| gv * yv * (1.0 - yv))
                        .collect(),
                    ActKind::Tanh => g
                        .iter()
                        .zip(y)
                        .map(|(gv, yv)| gv * (1.0 - yv * yv))
                        .collect(),
                    ActKind::Relu => g
                        .iter()
                        .zip(&self.nodes[*a].data)
                        .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                        .collect(),
                    ActKind::Softmax => {
                        let cols = *node.dims.last().unwrap_or(&1);
                        let mut da = vec![0.0; g.len()];
                        for (row, (grow, yrow)) in
                            g.chunks(cols).zip(y.chunks(cols)).enumerate()
                        {
                            let dot: f64 =
                                grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                            for j in 0..cols {
                                da[row * cols + j] = yrow[j] * (grow[j] - dot);
                            }
                        }
                        da
                    }
                };
                vec![(*a, da)]
            }
            Op::Sqrt { a } => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(&node.data)
                    .map(|(gv, yv)| if *yv > 0.0 { gv / (2.0 * yv) } else { 0.0 })
                    .collect();
                vec![(*a, da)]
            }
            Op::Sum { a } => {
                let da = vec![g[0]; self.nodes[*a].data.len()];
                vec![(*a, da)]
            }
            Op::Conv1d { x, w, b, stride } => {
                let (t, cin) = (self.nodes[*x].dims[0], self.nodes[*x].dims[1]);
                let dw_dims = &self.nodes[*w].dims;
                let (width, cout) = (dw_dims[0], dw_dims[2]);
                let mut dx = vec![0.0; t * cin];
                let mut dw = vec![0.0; width * cin * cout];
                let mut db = vec![0.0; cout];
                kernels::conv1d_backward(
                    &self.nodes[*x].data,
                    &self.nodes[*w].data,
                    g,
                    t,
                    cin,
                    cout,
                    width,
                    *stride,
                    &mut dx,
                    &mut dw,
                    &mut db,
                );
                vec![(*x, dx), (*w, dw), (*b, db)]
            }
            Op::Lstm(rec) => {
                let mut dx = vec![0.0; rec.batch * rec.steps * rec.in_dim];
                let mut dwx = vec![0.0; rec.in_dim * 4 * rec.hidden];
                let mut dwh = vec![0.0; rec.hidden * 4 * rec.hidden];
                let mut db = vec![0.0; 4 * rec.hidden];
                kernels::lstm_backward(
                    &self.nodes[rec.x].data,
                    &self.nodes[rec.wx].data,
                    &self.nodes[rec.wh].data,
                    &node.data,
                    &rec.saved,
                    g,
                    rec.batch,
                    rec.steps,
                    rec.in_dim,
                    rec.hidden,
                    rec.reverse,
                    &mut dx,
                    &mut dwx,
                    &mut dwh,
                    &mut db,
                );
                vec![(rec.x, dx), (rec.wx, dwx), (rec.wh, dwh), (rec.b, db)]
            }
            Op::NormTime { x, mean, inv_std } => {
                let (t, c) = (node.dims[0], node.dims[1]);
                let src = &self.nodes[*x].data;
                // Per channel: dx = inv_std·(dy − mean(dy) − x̂·mean(dy·x̂))
                let mut sum_dy = vec![0.0; c];
                let mut sum_dyxh = vec![0.0; c];
                for ti in 0..t {
                    for j in 0..c {
                        let gv = g[ti * c + j];
                        let xh = (src[ti * c + j] - mean[j]) * inv_std[j];
                        sum_dy[j] += gv;
                        sum_dyxh[j] += gv * xh;
                    }
                }
                let tn = t as f64;
                let mut dx = vec![0.0; src.len()];
                for ti in 0..t {
                    for j in 0..c {
                        let gv = g[ti * c + j];
                        let xh = (src[ti * c + j] - mean[j]) * inv_std[j];
                        dx[ti * c + j] =
                            inv_std[j] * (gv - sum_dy[j] / tn - xh * sum_dyxh[j] / tn);
                    }
                }
                vec![(*x, dx)]
            }
            Op::BceSum { p, labels } => {
                let gs = g[0];
                let dp: Vec<f64> = self.nodes[*p]
                    .data
                    .iter()
                    .zip(labels)
                    .map(|(&pv, &yv)| {
                        if pv <= BCE_CLAMP || pv >= 1.0 - BCE_CLAMP {
                            0.0
                        } else {
                            gs * (pv - yv) / (pv * (1.0 - pv))
                        }
                    })
                    .collect();
                vec![(*p, dp)]
            }
        }
    }
}
