//! Tight inner loops shared by the graph operations. Everything operates on
//! plain row-major slices so the hot paths stay allocation-free and
//! auto-vectorizable.

/// out += a[M×K] · b[K×N]
pub fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// out += aᵀ · b where a is [K×M], b is [K×N], out is [M×N]
pub fn matmul_tn_acc(a: &[f64], b: &[f64], k: usize, m: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// out += a · bᵀ where a is [M×K], b is [N×K], out is [M×N]
pub fn matmul_nt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                s += av * bv;
            }
            out[i * n + j] += s;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// 1-D convolution over time with symmetric zero padding.
///
/// x: [T×Cin], w: [W×Cin×Cout], b: [Cout], output: [Tout×Cout] with
/// Tout = ceil(T / stride). W must be odd.
pub fn conv1d_forward(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    t: usize,
    cin: usize,
    cout: usize,
    width: usize,
    stride: usize,
    out: &mut [f64],
) {
    let t_out = t.div_ceil(stride);
    debug_assert_eq!(out.len(), t_out * cout);
    let pad = (width - 1) / 2;
    for to in 0..t_out {
        let orow = &mut out[to * cout..(to + 1) * cout];
        orow.copy_from_slice(b);
        for wi in 0..width {
            let ti = (to * stride + wi) as isize - pad as isize;
            if ti < 0 || ti >= t as isize {
                continue;
            }
            let xrow = &x[ti as usize * cin..(ti as usize + 1) * cin];
            let wslab = &w[wi * cin * cout..(wi + 1) * cin * cout];
            for (ci, &xv) in xrow.iter().enumerate() {
                let wrow = &wslab[ci * cout..(ci + 1) * cout];
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
    }
}

/// Backward of [`conv1d_forward`]; accumulates into dx, dw, db.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    t: usize,
    cin: usize,
    cout: usize,
    width: usize,
    stride: usize,
    dx: &mut [f64],
    dw: &mut [f64],
    db: &mut [f64],
) {
    let t_out = t.div_ceil(stride);
    let pad = (width - 1) / 2;
    for to in 0..t_out {
        let drow = &dout[to * cout..(to + 1) * cout];
        for (d, &dv) in db.iter_mut().zip(drow) {
            *d += dv;
        }
        for wi in 0..width {
            let ti = (to * stride + wi) as isize - pad as isize;
            if ti < 0 || ti >= t as isize {
                continue;
            }
            let ti = ti as usize;
            let xrow = &x[ti * cin..(ti + 1) * cin];
            let wslab = &w[wi * cin * cout..(wi + 1) * cin * cout];
            let dwslab = &mut dw[wi * cin * cout..(wi + 1) * cin * cout];
            let dxrow = &mut dx[ti * cin..(ti + 1) * cin];
            for ci in 0..cin {
                let wrow = &wslab[ci * cout..(ci + 1) * cout];
                let dwrow = &mut dwslab[ci * cout..(ci + 1) * cout];
                let xv = xrow[ci];
                let mut s = 0.0;
                for ((&dv, &wv), dwv) in drow.iter().zip(wrow).zip(dwrow.iter_mut()) {
                    s += dv * wv;
                    *dwv += xv * dv;
                }
                dxrow[ci] += s;
            }
        }
    }
}

/// Saved forward state of one unidirectional LSTM pass, kept for backward.
#[derive(Debug)]
pub struct LstmSaved {
    /// Post-activation gates (i, f, g, o) per (batch, step): [B×S×4H].
    pub gates: Vec<f64>,
    /// Cell states per (batch, step): [B×S×H].
    pub cells: Vec<f64>,
    /// tanh of cell states: [B×S×H].
    pub tanh_c: Vec<f64>,
}

/// Batched unidirectional LSTM over `steps` timesteps.
///
/// x: [B×S×F], wx: [F×4H], wh: [H×4H], b: [4H]; output y: [B×S×H].
/// Gate packing order along the 4H axis is (input, forget, cell, output).
/// Initial hidden and cell states are zero. When `reverse` is set the steps
/// are consumed from the end of the sequence; outputs stay in input order.
#[allow(clippy::too_many_arguments)]
pub fn lstm_forward(
    x: &[f64],
    wx: &[f64],
    wh: &[f64],
    b: &[f64],
    batch: usize,
    steps: usize,
    in_dim: usize,
    hidden: usize,
    reverse: bool,
    y: &mut [f64],
) -> LstmSaved {
    let h4 = 4 * hidden;
    debug_assert_eq!(x.len(), batch * steps * in_dim);
    debug_assert_eq!(y.len(), batch * steps * hidden);

    // Input projection for every (b, s) at once.
    let mut xp = vec![0.0; batch * steps * h4];
    matmul_acc(x, wx, batch * steps, in_dim, h4, &mut xp);

    let mut gates = vec![0.0; batch * steps * h4];
    let mut cells = vec![0.0; batch * steps * hidden];
    let mut tanh_c = vec![0.0; batch * steps * hidden];

    let mut h_prev = vec![0.0; batch * hidden];
    let mut c_prev = vec![0.0; batch * hidden];
    let mut hp = vec![0.0; batch * h4];

    for idx in 0..steps {
        let s = if reverse { steps - 1 - idx } else { idx };
        hp.iter_mut().for_each(|v| *v = 0.0);
        matmul_acc(&h_prev, wh, batch, hidden, h4, &mut hp);
        for bi in 0..batch {
            let base = (bi * steps + s) * h4;
            let g = &mut gates[base..base + h4];
            let xrow = &xp[base..base + h4];
            let hrow = &hp[bi * h4..(bi + 1) * h4];
            for k in 0..h4 {
                g[k] = xrow[k] + hrow[k] + b[k];
            }
            for k in 0..hidden {
                g[k] = sigmoid(g[k]); // input gate
                g[hidden + k] = sigmoid(g[hidden + k]); // forget gate
                g[2 * hidden + k] = g[2 * hidden + k].tanh(); // cell candidate
                g[3 * hidden + k] = sigmoid(g[3 * hidden + k]); // output gate
            }
            let cbase = (bi * steps + s) * hidden;
            let cp = &mut c_prev[bi * hidden..(bi + 1) * hidden];
            let hpv = &mut h_prev[bi * hidden..(bi + 1) * hidden];
            for k in 0..hidden {
                let c = g[hidden + k] * cp[k] + g[k] * g[2 * hidden + k];
                let tc = c.tanh();
                cells[cbase + k] = c;
                tanh_c[cbase + k] = tc;
                let h = g[3 * hidden + k] * tc;
                cp[k] = c;
                hpv[k] = h;
                y[cbase + k] = h;
            }
        }
    }

    LstmSaved { gates, cells, tanh_c }
}

/// Backward of [`lstm_forward`]; accumulates into dx, dwx, dwh, db.
#[allow(clippy::too_many_arguments)]
pub fn lstm_backward(
    x: &[f64],
    wx: &[f64],
    wh: &[f64],
    y: &[f64],
    saved: &LstmSaved,
    dy: &[f64],
    batch: usize,
    steps: usize,
    in_dim: usize,
    hidden: usize,
    reverse: bool,
    dx: &mut [f64],
    dwx: &mut [f64],
    dwh: &mut [f64],
    db: &mut [f64],
) {
    let h4 = 4 * hidden;
    let mut dgates = vec![0.0; batch * steps * h4];
    let mut dh = vec![0.0; batch * hidden];
    let mut dc = vec![0.0; batch * hidden];
    let mut dg_step = vec![0.0; batch * h4];

    for idx in (0..steps).rev() {
        let s = if reverse { steps - 1 - idx } else { idx };
        let s_prev = if idx > 0 {
            Some(if reverse { steps - idx } else { idx - 1 })
        } else {
            None
        };
        for bi in 0..batch {
            let base = (bi * steps + s) * h4;
            let cbase = (bi * steps + s) * hidden;
            let g = &saved.gates[base..base + h4];
            let dhb = &mut dh[bi * hidden..(bi + 1) * hidden];
            let dcb = &mut dc[bi * hidden..(bi + 1) * hidden];
            let dgb = &mut dg_step[bi * h4..(bi + 1) * h4];
            for k in 0..hidden {
                let dhk = dhb[k] + dy[cbase + k];
                let i = g[k];
                let f = g[hidden + k];
                let gg = g[2 * hidden + k];
                let o = g[3 * hidden + k];
                let tc = saved.tanh_c[cbase + k];
                let c_prev = match s_prev {
                    Some(sp) => saved.cells[(bi * steps + sp) * hidden + k],
                    None => 0.0,
                };
                let do_ = dhk * tc;
                let dck = dcb[k] + dhk * o * (1.0 - tc * tc);
                let di = dck * gg;
                let dgg = dck * i;
                let df = dck * c_prev;
                dgb[k] = di * i * (1.0 - i);
                dgb[hidden + k] = df * f * (1.0 - f);
                dgb[2 * hidden + k] = dgg * (1.0 - gg * gg);
                dgb[3 * hidden + k] = do_ * o * (1.0 - o);
                dcb[k] = dck * f;
            }
            dgates[base..base + h4].copy_from_slice(dgb);
        }
        // dh_prev = dG · whᵀ ; dwh += h_prevᵀ · dG
        dh.iter_mut().for_each(|v| *v = 0.0);
        matmul_nt_acc(&dg_step, wh, batch, h4, hidden, &mut dh);
        if let Some(sp) = s_prev {
            // Gather previous hidden states from y, then rank-1 accumulate.
            for bi in 0..batch {
                let hprev = &y[(bi * steps + sp) * hidden..(bi * steps + sp + 1) * hidden];
                let dgb = &dg_step[bi * h4..(bi + 1) * h4];
                for (k, &hv) in hprev.iter().enumerate() {
                    let row = &mut dwh[k * h4..(k + 1) * h4];
                    for (r, &dg) in row.iter_mut().zip(dgb) {
                        *r += hv * dg;
                    }
                }
            }
        }
    }

    for bs in 0..batch * steps {
        let row = &dgates[bs * h4..(bs + 1) * h4];
        for (d, &g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    // dX = dG · wxᵀ ; dwx += Xᵀ · dG
    matmul_nt_acc(&dgates, wx, batch * steps, h4, in_dim, dx);
    matmul_tn_acc(x, &dgates, batch * steps, in_dim, h4, dwx);
}
