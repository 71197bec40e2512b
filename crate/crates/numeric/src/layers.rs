//! Parameterized layers: linear, 1-D convolution, and (Bi)LSTM stacks.
//!
//! Each layer owns its weights as [`Tensor`]s. For a forward pass the
//! weights are entered into a [`Graph`] once (`leaf`), producing a `*Vars`
//! handle that can be applied to graph variables; gradients land back on the
//! graph leaves and are harvested by the training loop.

use rand::Rng;

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;
use crate::{Result, VisitParams};

/// Uniform(−1/√fan_in, +1/√fan_in) weight initialization.
fn init_uniform(rng: &mut impl Rng, dims: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = dims.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(dims, data).expect("sized by dims").param()
}

// ───────────────────────── Linear ─────────────────────────

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor, // [in×out]
    pub b: Tensor, // [out]
}

impl Linear {
    pub fn new(rng: &mut impl Rng, in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: init_uniform(rng, vec![in_dim, out_dim], in_dim),
            b: Tensor::zeros(vec![out_dim]).param(),
        }
    }

    /// All-zero weights and bias; the layer starts as the constant-zero map.
    pub fn zeroed(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: Tensor::zeros(vec![in_dim, out_dim]).param(),
            b: Tensor::zeros(vec![out_dim]).param(),
        }
    }

    pub fn leaf(&self, g: &mut Graph) -> LinearVars {
        LinearVars { w: g.leaf(&self.w), b: g.leaf(&self.b) }
    }
}

impl VisitParams for Linear {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("w", &self.w);
        f("b", &self.b);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("w", &mut self.w);
        f("b", &mut self.b);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

impl LinearVars {
    /// Applies the layer over the last dimension of `x` (rank 2 or 3).
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let dims = g.dims(x).to_vec();
        let in_dim = *dims.last().unwrap();
        let rows: usize = dims[..dims.len() - 1].iter().product();
        let flat = g.reshape(x, vec![rows, in_dim])?;
        let y = g.matmul(flat, self.w)?;
        let y = g.add_bias(y, self.b)?;
        let out_dim = g.dims(y)[1];
        let mut out_dims = dims[..dims.len() - 1].to_vec();
        out_dims.push(out_dim);
        g.reshape(y, out_dims)
    }
}

// ───────────────────────── Conv1d ─────────────────────────

#[derive(Debug, Clone)]
pub struct Conv1dLayer {
    pub w: Tensor, // [W×Cin×Cout]
    pub b: Tensor, // [Cout]
    pub stride: usize,
}

impl Conv1dLayer {
    pub fn new(
        rng: &mut impl Rng,
        in_channels: usize,
        out_channels: usize,
        width: usize,
        stride: usize,
    ) -> Self {
        Conv1dLayer {
            w: init_uniform(
                rng,
                vec![width, in_channels, out_channels],
                width * in_channels,
            ),
            b: Tensor::zeros(vec![out_channels]).param(),
            stride,
        }
    }

    pub fn leaf(&self, g: &mut Graph) -> Conv1dVars {
        Conv1dVars { w: g.leaf(&self.w), b: g.leaf(&self.b), stride: self.stride }
    }
}

impl VisitParams for Conv1dLayer {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("w", &self.w);
        f("b", &self.b);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("w", &mut self.w);
        f("b", &mut self.b);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Conv1dVars {
    pub w: Var,
    pub b: Var,
    pub stride: usize,
}

impl Conv1dVars {
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.conv1d(x, self.w, self.b, self.stride)
    }
}

// ───────────────────────── LSTM ─────────────────────────

/// One direction of an LSTM layer. Gate packing order is (i, f, g, o).
#[derive(Debug, Clone)]
pub struct LstmDir {
    pub wx: Tensor, // [F×4H]
    pub wh: Tensor, // [H×4H]
    pub b: Tensor,  // [4H]
}

impl LstmDir {
    pub fn new(rng: &mut impl Rng, in_dim: usize, hidden: usize) -> Self {
        LstmDir {
            wx: init_uniform(rng, vec![in_dim, 4 * hidden], in_dim),
            wh: init_uniform(rng, vec![hidden, 4 * hidden], hidden),
            b: Tensor::zeros(vec![4 * hidden]).param(),
        }
    }
}

impl VisitParams for LstmDir {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("wx", &self.wx);
        f("wh", &self.wh);
        f("b", &self.b);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("wx", &mut self.wx);
        f("wh", &mut self.wh);
        f("b", &mut self.b);
    }
}

/// Bidirectional LSTM stack. Layer l > 0 consumes the concatenated
/// forward/backward outputs of layer l−1, so every hidden layer input is 2H.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub layers: Vec<(LstmDir, LstmDir)>, // (forward, backward) per layer
    pub hidden: usize,
}

impl BiLstm {
    pub fn new(rng: &mut impl Rng, in_dim: usize, hidden: usize, layers: usize) -> Self {
        assert!(layers >= 1, "BiLstm needs at least one layer");
        let mut out = Vec::with_capacity(layers);
        let mut dim = in_dim;
        for _ in 0..layers {
            out.push((LstmDir::new(rng, dim, hidden), LstmDir::new(rng, dim, hidden)));
            dim = 2 * hidden;
        }
        BiLstm { layers: out, hidden }
    }

    pub fn leaf(&self, g: &mut Graph) -> BiLstmVars {
        BiLstmVars {
            layers: self
                .layers
                .iter()
                .map(|(f, r)| {
                    (
                        LstmDirVars { wx: g.leaf(&f.wx), wh: g.leaf(&f.wh), b: g.leaf(&f.b) },
                        LstmDirVars { wx: g.leaf(&r.wx), wh: g.leaf(&r.wh), b: g.leaf(&r.b) },
                    )
                })
                .collect(),
        }
    }
}

impl VisitParams for BiLstm {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, (fw, bw)) in self.layers.iter().enumerate() {
            fw.visit_params(&mut |n, t| f(&format!("l{i}.fwd.{n}"), t));
            bw.visit_params(&mut |n, t| f(&format!("l{i}.rev.{n}"), t));
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, (fw, bw)) in self.layers.iter_mut().enumerate() {
            fw.visit_params_mut(&mut |n, t| f(&format!("l{i}.fwd.{n}"), t));
            bw.visit_params_mut(&mut |n, t| f(&format!("l{i}.rev.{n}"), t));
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmDirVars {
    pub wx: Var,
    pub wh: Var,
    pub b: Var,
}

#[derive(Debug, Clone)]
pub struct BiLstmVars {
    pub layers: Vec<(LstmDirVars, LstmDirVars)>,
}

impl BiLstmVars {
    /// x: [B×S×F] → [B×S×2H].
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        for (fw, bw) in &self.layers {
            let yf = g.lstm(h, fw.wx, fw.wh, fw.b, false)?;
            let yb = g.lstm(h, bw.wx, bw.wh, bw.b, true)?;
            h = g.concat_last(&[yf, yb])?;
        }
        Ok(h)
    }
}
