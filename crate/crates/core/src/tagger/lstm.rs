//! Single-direction LSTM over a sequence, with the cache needed for
//! backpropagation through time.
//!
//! Weights are `4H x (D + H)` acting on `[x_t; h_{t-1}]`, gate blocks in the
//! order input, forget, cell, output.

use super::tensor::{axpy, dot, Tensor};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    /// Processing order of time steps (reversed for backward direction).
    order: Vec<usize>,
    /// Per processed step: `[x; h_prev]`.
    xh: Vec<Vec<f64>>,
    /// Per processed step: activated gates `i, f, g, o`, each of size H.
    gates: Vec<Vec<f64>>,
    c_prev: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
}

/// Runs the LSTM; returns `T x H` hidden states in original time order.
pub(crate) fn lstm_forward(input: &Tensor, weight: &Tensor, bias: &Tensor, reverse: bool) -> (Tensor, LstmCache) {
    let steps = input.rows();
    let d = input.cols();
    let h4 = weight.rows();
    let hidden = h4 / 4;
    debug_assert_eq!(weight.cols(), d + hidden);

    let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
    let mut out = Tensor::zeros(steps, hidden);
    let mut cache = LstmCache {
        order: order.clone(),
        xh: Vec::with_capacity(steps),
        gates: Vec::with_capacity(steps),
        c_prev: Vec::with_capacity(steps),
        tanh_c: Vec::with_capacity(steps),
    };
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let b = bias.data();

    for &t in &order {
        let mut xh = Vec::with_capacity(d + hidden);
        xh.extend_from_slice(input.row(t));
        xh.extend_from_slice(&h);
        let mut gates: Vec<f64> = (0..h4).map(|r| dot(weight.row(r), &xh) + b[r]).collect();
        for k in 0..hidden {
            gates[k] = sigmoid(gates[k]);
            gates[hidden + k] = sigmoid(gates[hidden + k]);
            gates[2 * hidden + k] = gates[2 * hidden + k].tanh();
            gates[3 * hidden + k] = sigmoid(gates[3 * hidden + k]);
        }
        let c_prev = c.clone();
        let mut tanh_c = vec![0.0; hidden];
        for k in 0..hidden {
            c[k] = gates[hidden + k] * c_prev[k] + gates[k] * gates[2 * hidden + k];
            tanh_c[k] = c[k].tanh();
            h[k] = gates[3 * hidden + k] * tanh_c[k];
        }
        out.row_mut(t).copy_from_slice(&h);
        cache.xh.push(xh);
        cache.gates.push(gates);
        cache.c_prev.push(c_prev);
        cache.tanh_c.push(tanh_c);
    }
    (out, cache)
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub(crate) fn lstm_backward(
    cache: &LstmCache,
    grad_out: &Tensor,
    weight: &Tensor,
    grad_weight: &mut Tensor,
    grad_bias: &mut Tensor,
) -> Tensor {
    let steps = grad_out.rows();
    let hidden = grad_out.cols();
    let d = weight.cols() - hidden;
    let mut grad_in = Tensor::zeros(steps, d);
    let mut dh_rec = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let mut dz = vec![0.0; 4 * hidden];
    let mut dxh = vec![0.0; d + hidden];

    for s in (0..steps).rev() {
        let t = cache.order[s];
        let g = &cache.gates[s];
        let (gi, gf, gg, go) = (&g[..hidden], &g[hidden..2 * hidden], &g[2 * hidden..3 * hidden], &g[3 * hidden..]);
        let tanh_c = &cache.tanh_c[s];
        let c_prev = &cache.c_prev[s];
        let dout = grad_out.row(t);
        for k in 0..hidden {
            let dh = dout[k] + dh_rec[k];
            let dc = dh * go[k] * (1.0 - tanh_c[k] * tanh_c[k]) + dc_next[k];
            dz[k] = dc * gg[k] * gi[k] * (1.0 - gi[k]);
            dz[hidden + k] = dc * c_prev[k] * gf[k] * (1.0 - gf[k]);
            dz[2 * hidden + k] = dc * gi[k] * (1.0 - gg[k] * gg[k]);
            dz[3 * hidden + k] = dh * tanh_c[k] * go[k] * (1.0 - go[k]);
            dc_next[k] = dc * gf[k];
        }
        let xh = &cache.xh[s];
        dxh.fill(0.0);
        let gb = grad_bias.data_mut();
        for (r, &dzr) in dz.iter().enumerate() {
            if dzr == 0.0 {
                continue;
            }
            gb[r] += dzr;
            axpy(grad_weight.row_mut(r), dzr, xh);
            axpy(&mut dxh, dzr, weight.row(r));
        }
        grad_in.row_mut(t).copy_from_slice(&dxh[..d]);
        dh_rec.copy_from_slice(&dxh[d..]);
    }
    grad_in
}
