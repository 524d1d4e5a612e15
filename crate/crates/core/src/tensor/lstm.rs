//! Fused LSTM recurrence with hand-written backpropagation through time.
//!
//! The input projection `x·W_x + b` is computed outside with ordinary tape
//! ops; this kernel adds the recurrent term `h_{t-1}·W_h`, applies the gate
//! nonlinearities and runs the memory cell. Gate blocks are laid out as
//! `[input, forget, candidate, output]` along the column axis.

use super::gemm::{gemm, Operand};

#[derive(Debug, Clone)]
pub(crate) struct LstmSaved {
    pub batch: usize,
    pub steps: usize,
    pub hidden: usize,
    pub reverse: bool,
    /// Post-activation gates, `[batch*steps × 4*hidden]`.
    pub gates: Vec<f64>,
    /// Memory cells, `[batch*steps × hidden]`.
    pub cells: Vec<f64>,
}

impl LstmSaved {
    fn order(&self) -> Vec<usize> {
        if self.reverse {
            (0..self.steps).rev().collect()
        } else {
            (0..self.steps).collect()
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

/// Runs the recurrence. Rows of `xproj` are example-major (`b*steps + t`).
pub(crate) fn forward(
    xproj: &[f64],
    w_hidden: &[f64],
    batch: usize,
    steps: usize,
    hidden: usize,
    reverse: bool,
) -> (Vec<f64>, LstmSaved) {
    let g4 = 4 * hidden;
    let mut h_out = vec![0.0; batch * steps * hidden];
    let mut cells = vec![0.0; batch * steps * hidden];
    let mut gates = vec![0.0; batch * steps * g4];
    let mut pre = vec![0.0; batch * g4];
    let mut h_prev = vec![0.0; batch * hidden];
    let mut c_prev = vec![0.0; batch * hidden];

    let mut saved = LstmSaved {
        batch,
        steps,
        hidden,
        reverse,
        gates: Vec::new(),
        cells: Vec::new(),
    };
    for (step, t) in saved.order().into_iter().enumerate() {
        for b in 0..batch {
            let r = b * steps + t;
            pre[b * g4..(b + 1) * g4].copy_from_slice(&xproj[r * g4..(r + 1) * g4]);
        }
        if step > 0 {
            gemm(
                Operand::new(&h_prev, batch, hidden),
                Operand::new(w_hidden, hidden, g4),
                &mut pre,
                true,
            );
        }
        for b in 0..batch {
            let r = b * steps + t;
            let p = &pre[b * g4..(b + 1) * g4];
            for j in 0..hidden {
                let i = sigmoid(p[j]);
                let f = sigmoid(p[hidden + j]);
                let g = p[2 * hidden + j].tanh();
                let o = sigmoid(p[3 * hidden + j]);
                let c = f * c_prev[b * hidden + j] + i * g;
                let h = o * c.tanh();
                let gr = &mut gates[r * g4..(r + 1) * g4];
                gr[j] = i;
                gr[hidden + j] = f;
                gr[2 * hidden + j] = g;
                gr[3 * hidden + j] = o;
                cells[r * hidden + j] = c;
                h_out[r * hidden + j] = h;
                c_prev[b * hidden + j] = c;
                h_prev[b * hidden + j] = h;
            }
        }
    }
    saved.gates = gates;
    saved.cells = cells;
    (h_out, saved)
}

/// Returns `(d xproj, d w_hidden)` for upstream gradient `grad_h`.
pub(crate) fn backward(
    saved: &LstmSaved,
    w_hidden: &[f64],
    h_out: &[f64],
    grad_h: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let LstmSaved {
        batch,
        steps,
        hidden,
        ..
    } = *saved;
    let g4 = 4 * hidden;
    let mut d_xproj = vec![0.0; batch * steps * g4];
    let mut d_w = vec![0.0; hidden * g4];
    let mut dh_next = vec![0.0; batch * hidden];
    let mut dc_next = vec![0.0; batch * hidden];
    let mut d_pre = vec![0.0; batch * g4];
    let mut h_prev = vec![0.0; batch * hidden];

    let order = saved.order();
    for pos in (0..order.len()).rev() {
        let t = order[pos];
        let prev_t = if pos > 0 { Some(order[pos - 1]) } else { None };
        for b in 0..batch {
            let r = b * steps + t;
            let gr = &saved.gates[r * g4..(r + 1) * g4];
            for j in 0..hidden {
                let bj = b * hidden + j;
                let dh = grad_h[r * hidden + j] + dh_next[bj];
                let c = saved.cells[r * hidden + j];
                let tc = c.tanh();
                let (i, f, g, o) = (gr[j], gr[hidden + j], gr[2 * hidden + j], gr[3 * hidden + j]);
                let c_prev = prev_t.map_or(0.0, |pt| saved.cells[(b * steps + pt) * hidden + j]);
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[bj];
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * c_prev;
                dc_next[bj] = dc * f;
                let dp = &mut d_pre[b * g4..(b + 1) * g4];
                dp[j] = d_i * i * (1.0 - i);
                dp[hidden + j] = d_f * f * (1.0 - f);
                dp[2 * hidden + j] = d_g * (1.0 - g * g);
                dp[3 * hidden + j] = d_o * o * (1.0 - o);
            }
            d_xproj[r * g4..(r + 1) * g4].copy_from_slice(&d_pre[b * g4..(b + 1) * g4]);
        }
        match prev_t {
            Some(pt) => {
                for b in 0..batch {
                    let rp = b * steps + pt;
                    h_prev[b * hidden..(b + 1) * hidden]
                        .copy_from_slice(&h_out[rp * hidden..(rp + 1) * hidden]);
                }
                gemm(
                    Operand::new(&h_prev, batch, hidden).t(),
                    Operand::new(&d_pre, batch, g4),
                    &mut d_w,
                    true,
                );
                gemm(
                    Operand::new(&d_pre, batch, g4),
                    Operand::new(w_hidden, hidden, g4).t(),
                    &mut dh_next,
                    false,
                );
            }
            None => dh_next.iter_mut().for_each(|v| *v = 0.0),
        }
    }
    (d_xproj, d_w)
}
