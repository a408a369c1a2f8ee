//! LSTM cell and full-sequence scan with backpropagation through time.
//!
//! Weight layout: `w_ih` is `C_in × 4H`, `w_hh` is `H × 4H`, `bias` is `4H`;
//! gate blocks along the 4H axis are ordered i, f, g, o.

use super::array::Tensor;
use super::kernels::{self, dot, sigmoid};
use super::tape::axpy;

#[derive(Debug)]
pub struct CellCache {
    /// Activated gates i, f, g, o.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug)]
pub struct ScanCache {
    reverse: bool,
    hidden: usize,
    /// Activated gates per time index, `T × 4H`.
    gates: Vec<f64>,
    /// Cell state after the step at each time index, `T × H`.
    cells: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Hidden state after the step at each time index, `T × H`.
    hs: Vec<f64>,
}

pub struct CellGrads {
    pub dx: Vec<f64>,
    pub dh: Vec<f64>,
    pub dc: Vec<f64>,
    pub dw_ih: Vec<f64>,
    pub dw_hh: Vec<f64>,
    pub dbias: Vec<f64>,
}

pub struct ScanGrads {
    pub dx: Vec<f64>,
    pub dw_ih: Vec<f64>,
    pub dw_hh: Vec<f64>,
    pub dbias: Vec<f64>,
}

fn activate(pre: &mut [f64], hidden: usize) {
    for (j, a) in pre.iter_mut().enumerate() {
        *a = if (2 * hidden..3 * hidden).contains(&j) {
            a.tanh()
        } else {
            sigmoid(*a)
        };
    }
}

/// One step. Returns `(h_new, c_new, cache)`.
pub fn cell_forward(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    bias: &[f64],
) -> (Vec<f64>, Vec<f64>, CellCache) {
    let hidden = h.len();
    let mut gates = bias.to_vec();
    kernels::matmul(x, w_ih, &mut gates, 1, x.len(), 4 * hidden);
    kernels::matmul(h, w_hh, &mut gates, 1, hidden, 4 * hidden);
    activate(&mut gates, hidden);
    let mut c_new = vec![0.0; hidden];
    let mut h_new = vec![0.0; hidden];
    let mut tanh_c = vec![0.0; hidden];
    for j in 0..hidden {
        let (i, f, g, o) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
        c_new[j] = f * c[j] + i * g;
        tanh_c[j] = c_new[j].tanh();
        h_new[j] = o * tanh_c[j];
    }
    (h_new, c_new, CellCache { gates, tanh_c })
}

/// Gate pre-activation gradient for one step given dL/dh_t and the
/// running dL/dc_t. Returns `(d_preact, dc_prev)`.
fn step_backward(gates: &[f64], tanh_c: &[f64], c_prev: &[f64], dh: &[f64], dc_in: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hidden = dh.len();
    let mut da = vec![0.0; 4 * hidden];
    let mut dc_prev = vec![0.0; hidden];
    for j in 0..hidden {
        let (i, f, g, o) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
        let tc = tanh_c[j];
        let d_o = dh[j] * tc;
        let dc = dc_in[j] + dh[j] * o * (1.0 - tc * tc);
        da[j] = dc * g * i * (1.0 - i);
        da[hidden + j] = dc * c_prev[j] * f * (1.0 - f);
        da[2 * hidden + j] = dc * i * (1.0 - g * g);
        da[3 * hidden + j] = d_o * o * (1.0 - o);
        dc_prev[j] = dc * f;
    }
    (da, dc_prev)
}

/// `g` is the upstream gradient of the stacked `[h_new; c_new]` output.
pub fn cell_backward(
    g: &[f64],
    cache: &CellCache,
    x: &[f64],
    h: &[f64],
    c: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
) -> CellGrads {
    let hidden = h.len();
    let c_in = x.len();
    let (da, dc) = step_backward(&cache.gates, &cache.tanh_c, c, &g[..hidden], &g[hidden..]);
    let mut dx = vec![0.0; c_in];
    let mut dh = vec![0.0; hidden];
    let mut dw_ih = vec![0.0; c_in * 4 * hidden];
    let mut dw_hh = vec![0.0; hidden * 4 * hidden];
    kernels::matmul_grad_lhs(&da, w_ih, &mut dx, 1, c_in, 4 * hidden);
    kernels::matmul_grad_lhs(&da, w_hh, &mut dh, 1, hidden, 4 * hidden);
    kernels::matmul_grad_rhs(x, &da, &mut dw_ih, 1, c_in, 4 * hidden);
    kernels::matmul_grad_rhs(h, &da, &mut dw_hh, 1, hidden, 4 * hidden);
    CellGrads {
        dx,
        dh,
        dc,
        dw_ih,
        dw_hh,
        dbias: da,
    }
}

/// Runs the cell over every row of `x` (`T × C_in`) from zero state, in
/// reverse time order when `reverse` is set. Row `t` of the output is the
/// hidden state produced when consuming input row `t`.
pub fn scan_forward(x: &Tensor, w_ih: &[f64], w_hh: &[f64], bias: &[f64], hidden: usize, reverse: bool) -> (Tensor, ScanCache) {
    let (steps, c_in) = (x.shape()[0], x.shape()[1]);
    let g4 = 4 * hidden;
    let mut gates = Vec::with_capacity(steps * g4);
    for _ in 0..steps {
        gates.extend_from_slice(bias);
    }
    kernels::matmul(x.data(), w_ih, &mut gates, steps, c_in, g4);
    let mut cells = vec![0.0; steps * hidden];
    let mut tanh_c = vec![0.0; steps * hidden];
    let mut hs = vec![0.0; steps * hidden];
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    for step in 0..steps {
        let t = if reverse { steps - 1 - step } else { step };
        let a = &mut gates[t * g4..(t + 1) * g4];
        for (k, &hk) in h.iter().enumerate() {
            if hk != 0.0 {
                axpy(hk, &w_hh[k * g4..(k + 1) * g4], a);
            }
        }
        activate(a, hidden);
        for j in 0..hidden {
            let (i, f, g, o) = (a[j], a[hidden + j], a[2 * hidden + j], a[3 * hidden + j]);
            c[j] = f * c[j] + i * g;
            let tc = c[j].tanh();
            h[j] = o * tc;
            tanh_c[t * hidden + j] = tc;
        }
        cells[t * hidden..(t + 1) * hidden].copy_from_slice(&c);
        hs[t * hidden..(t + 1) * hidden].copy_from_slice(&h);
    }
    let out = Tensor::new(vec![steps, hidden], hs.clone()).expect("scan output shape");
    (
        out,
        ScanCache {
            reverse,
            hidden,
            gates,
            cells,
            tanh_c,
            hs,
        },
    )
}

pub fn scan_backward(g: &[f64], cache: &ScanCache, x: &Tensor, w_ih: &[f64], w_hh: &[f64]) -> ScanGrads {
    let hidden = cache.hidden;
    let g4 = 4 * hidden;
    let (steps, c_in) = (x.shape()[0], x.shape()[1]);
    let order = |step: usize| if cache.reverse { steps - 1 - step } else { step };
    let zeros = vec![0.0; hidden];
    let mut d_pre = vec![0.0; steps * g4];
    let mut dw_hh = vec![0.0; hidden * g4];
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    for step in (0..steps).rev() {
        let t = order(step);
        let (c_prev, h_prev) = if step > 0 {
            let tp = order(step - 1);
            (&cache.cells[tp * hidden..(tp + 1) * hidden], &cache.hs[tp * hidden..(tp + 1) * hidden])
        } else {
            (&zeros[..], &zeros[..])
        };
        let mut dh = g[t * hidden..(t + 1) * hidden].to_vec();
        axpy(1.0, &dh_next, &mut dh);
        let (da, dc_prev) = step_backward(
            &cache.gates[t * g4..(t + 1) * g4],
            &cache.tanh_c[t * hidden..(t + 1) * hidden],
            c_prev,
            &dh,
            &dc_next,
        );
        for (k, dn) in dh_next.iter_mut().enumerate() {
            *dn = dot(&w_hh[k * g4..(k + 1) * g4], &da);
        }
        for (k, &hk) in h_prev.iter().enumerate() {
            if hk != 0.0 {
                axpy(hk, &da, &mut dw_hh[k * g4..(k + 1) * g4]);
            }
        }
        d_pre[t * g4..(t + 1) * g4].copy_from_slice(&da);
        dc_next = dc_prev;
    }
    let mut dbias = vec![0.0; g4];
    for row in d_pre.chunks_exact(g4) {
        axpy(1.0, row, &mut dbias);
    }
    let mut dx = vec![0.0; steps * c_in];
    let mut dw_ih = vec![0.0; c_in * g4];
    kernels::matmul_grad_lhs(&d_pre, w_ih, &mut dx, steps, c_in, g4);
    kernels::matmul_grad_rhs(x.data(), &d_pre, &mut dw_ih, steps, c_in, g4);
    ScanGrads {
        dx,
        dw_ih,
        dw_hh,
        dbias,
    }
}
