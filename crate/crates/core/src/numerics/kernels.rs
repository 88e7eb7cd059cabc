//! Dense kernels shared by the gradient tape and the no-grad forward paths.
//!
//! Both paths call these exact functions so that a surrogate's sampled
//! log-density and its re-scored log-density agree bit for bit.

use super::dist::sigmoid;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// `out = W x + b` with `W` row-major `[out.len(), x.len()]`.
#[inline]
pub fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r] + dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out += Wᵀ g`.
#[inline]
pub fn affine_transpose_acc(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, wv) in out.iter_mut().zip(row) {
            *o += gr * wv;
        }
    }
}

/// `dW += g xᵀ`, `db += g`.
#[inline]
pub fn outer_acc(g: &[f64], x: &[f64], dw: &mut [f64], db: Option<&mut [f64]>) {
    let cols = x.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (d, xv) in row.iter_mut().zip(x) {
            *d += gr * xv;
        }
    }
    if let Some(db) = db {
        for (d, gr) in db.iter_mut().zip(g) {
            *d += gr;
        }
    }
}

/// One LSTM cell update. Gate order in the stacked weights is
/// input, forget, candidate, output.
///
/// `gates` receives the activated gates (length `4H`); `h_out`/`c_out`
/// receive the new state.
#[allow(clippy::too_many_arguments)]
pub fn lstm_cell(
    w_ih: &[f64],
    w_hh: &[f64],
    bias: &[f64],
    x: &[f64],
    h: &[f64],
    c: &[f64],
    gates: &mut [f64],
    h_out: &mut [f64],
    c_out: &mut [f64],
) {
    let hidden = h.len();
    let nin = x.len();
    for r in 0..4 * hidden {
        gates[r] = bias[r] + dot(&w_ih[r * nin..(r + 1) * nin], x) + dot(&w_hh[r * hidden..(r + 1) * hidden], h);
    }
    for k in 0..hidden {
        let i = sigmoid(gates[k]);
        let f = sigmoid(gates[hidden + k]);
        let g = gates[2 * hidden + k].tanh();
        let o = sigmoid(gates[3 * hidden + k]);
        gates[k] = i;
        gates[hidden + k] = f;
        gates[2 * hidden + k] = g;
        gates[3 * hidden + k] = o;
        let cn = f * c[k] + i * g;
        c_out[k] = cn;
        h_out[k] = o * cn.tanh();
    }
}
