//! Reverse-mode gradient tape over vector-valued nodes.
//!
//! Nodes are evaluated eagerly as they are recorded; [`Graph::backward`]
//! replays the record in reverse and accumulates parameter gradients into a
//! [`Gradients`] buffer. Only the operations the surrogate and proposal
//! networks need are provided, several of them fused (LSTM cell, head
//! log-densities) to keep graphs small.

use super::dist::{normal_log_density, sigmoid, softplus};
use super::kernels::{affine, affine_transpose_acc, lstm_cell, outer_acc};
use super::lstm::LstmParams;
use super::params::{Gradients, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    /// `W x[off..off+len] + b`
    Affine {
        w: ParamId,
        b: ParamId,
        x: NodeId,
        x_off: usize,
        x_len: usize,
    },
    /// Output is `[h', c']`; `aux` holds the activated gates.
    Lstm {
        cell: LstmParams,
        x: NodeId,
        state: NodeId,
        aux: usize,
    },
    Concat {
        start: usize,
        count: usize,
    },
    Slice {
        x: NodeId,
        off: usize,
    },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddConst(NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    SumList {
        start: usize,
        count: usize,
    },
    /// Scalar `log N(x; mean, std)` with `mean`, `std` scalar nodes.
    NormalLp {
        mean: NodeId,
        std: NodeId,
        x: f64,
    },
    /// Scalar `log N(z; head[0], softplus(head[1]) + floor)`.
    NormalHeadLp {
        head: NodeId,
        z: f64,
        floor: f64,
    },
    /// Scalar `log softmax(logits)[index]`.
    CategoricalLp {
        logits: NodeId,
        index: usize,
    },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    off: usize,
    len: usize,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    data: Vec<f64>,
    aux: Vec<f64>,
    lists: Vec<NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, n: NodeId) -> &[f64] {
        let node = &self.nodes[n.0];
        &self.data[node.off..node.off + node.len]
    }

    pub fn scalar(&self, n: NodeId) -> f64 {
        self.value(n)[0]
    }

    fn push(&mut self, op: Op, value_len: usize) -> (NodeId, usize) {
        let off = self.data.len();
        self.data.resize(off + value_len, 0.0);
        self.nodes.push(Node {
            op,
            off,
            len: value_len,
        });
        (NodeId(self.nodes.len() - 1), off)
    }

    fn push_value(&mut self, op: Op, value: &[f64]) -> NodeId {
        let (id, off) = self.push(op, value.len());
        self.data[off..off + value.len()].copy_from_slice(value);
        id
    }

    fn range(&self, n: NodeId) -> (usize, usize) {
        let node = &self.nodes[n.0];
        (node.off, node.len)
    }

    pub fn input(&mut self, value: &[f64]) -> NodeId {
        self.push_value(Op::Input, value)
    }

    pub fn scalar_input(&mut self, v: f64) -> NodeId {
        self.push_value(Op::Input, &[v])
    }

    pub fn param(&mut self, store: &ParamStore, p: ParamId) -> NodeId {
        self.push_value(Op::Param(p), store.value(p))
    }

    pub fn affine(&mut self, store: &ParamStore, w: ParamId, b: ParamId, x: NodeId) -> NodeId {
        let (_, len) = self.range(x);
        self.affine_view(store, w, b, x, 0, len)
    }

    /// Affine map of the sub-vector `x[off..off+len]`.
    pub fn affine_view(
        &mut self,
        store: &ParamStore,
        w: ParamId,
        b: ParamId,
        x: NodeId,
        x_off: usize,
        x_len: usize,
    ) -> NodeId {
        let rows = store.value(b).len();
        debug_assert_eq!(store.value(w).len(), rows * x_len);
        let (xo, _) = self.range(x);
        let (id, off) = self.push(
            Op::Affine {
                w,
                b,
                x,
                x_off,
                x_len,
            },
            rows,
        );
        let (before, out) = self.data.split_at_mut(off);
        affine(
            store.value(w),
            store.value(b),
            &before[xo + x_off..xo + x_off + x_len],
            &mut out[..rows],
        );
        id
    }

    /// LSTM cell on input `x` and a `[h, c]` state node; returns the `[h', c']` node.
    pub fn lstm(&mut self, store: &ParamStore, cell: &LstmParams, x: NodeId, state: NodeId) -> NodeId {
        let hidden = cell.hidden;
        let aux = self.aux.len();
        self.aux.resize(aux + 4 * hidden, 0.0);
        let (xo, xl) = self.range(x);
        let (so, _) = self.range(state);
        let (id, off) = self.push(
            Op::Lstm {
                cell: cell.clone(),
                x,
                state,
                aux,
            },
            2 * hidden,
        );
        let (before, out) = self.data.split_at_mut(off);
        let (h_out, c_out) = out.split_at_mut(hidden);
        lstm_cell(
            store.value(cell.w_ih),
            store.value(cell.w_hh),
            store.value(cell.bias),
            &before[xo..xo + xl],
            &before[so..so + hidden],
            &before[so + hidden..so + 2 * hidden],
            &mut self.aux[aux..aux + 4 * hidden],
            h_out,
            &mut c_out[..hidden],
        );
        id
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let start = self.lists.len();
        self.lists.extend_from_slice(parts);
        let mut value = Vec::new();
        for &p in parts {
            value.extend_from_slice(self.value(p));
        }
        self.push_value(
            Op::Concat {
                start,
                count: parts.len(),
            },
            &value,
        )
    }

    pub fn slice(&mut self, x: NodeId, off: usize, len: usize) -> NodeId {
        let v = self.value(x)[off..off + len].to_vec();
        self.push_value(Op::Slice { x, off }, &v)
    }

    fn map(&mut self, x: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let v: Vec<f64> = self.value(x).iter().map(|&a| f(a)).collect();
        self.push_value(op, &v)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.map(x, Op::Tanh(x), f64::tanh)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.map(x, Op::Softplus(x), softplus)
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> NodeId {
        self.map(x, Op::AddConst(x), |a| a + c)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.map(x, Op::Scale(x, c), |a| a * c)
    }

    fn zip(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> NodeId {
        assert_eq!(self.range(a).1, self.range(b).1, "operand length mismatch");
        let v: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push_value(op, &v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).iter().sum::<f64>();
        self.push_value(Op::Sum(x), &[s])
    }

    /// Sum of scalar nodes, accumulated left to right.
    pub fn sum_list(&mut self, parts: &[NodeId]) -> NodeId {
        let start = self.lists.len();
        self.lists.extend_from_slice(parts);
        let mut s = 0.0;
        for &p in parts {
            s += self.scalar(p);
        }
        self.push_value(
            Op::SumList {
                start,
                count: parts.len(),
            },
            &[s],
        )
    }

    pub fn normal_lp(&mut self, mean: NodeId, std: NodeId, x: f64) -> NodeId {
        let v = normal_log_density(x, self.scalar(mean), self.scalar(std));
        self.push_value(Op::NormalLp { mean, std, x }, &[v])
    }

    pub fn normal_head_lp(&mut self, head: NodeId, z: f64, floor: f64) -> NodeId {
        let h = self.value(head);
        let v = normal_log_density(z, h[0], softplus(h[1]) + floor);
        self.push_value(Op::NormalHeadLp { head, z, floor }, &[v])
    }

    pub fn categorical_lp(&mut self, logits: NodeId, index: usize) -> NodeId {
        let v = super::dist::log_softmax_at(self.value(logits), index);
        self.push_value(Op::CategoricalLp { logits, index }, &[v])
    }

    /// Back-propagate `seed · d(loss)` into `grads`.
    pub fn backward(&self, loss: NodeId, seed: f64, store: &ParamStore, grads: &mut Gradients) {
        let mut g = vec![0.0; self.data.len()];
        let (lo, ll) = self.range(loss);
        for v in &mut g[lo..lo + ll] {
            *v = seed;
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let (off, len) = (node.off, node.len);
            if g[off..off + len].iter().all(|v| *v == 0.0) {
                continue;
            }
            // Inputs always precede outputs in the arena, so splitting at the
            // node offset separates upstream gradients from this node's.
            let (up, rest) = g.split_at_mut(off);
            let gout = &rest[..len];
            let out = &self.data[off..off + len];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    for (d, v) in grads.get_mut(*p).iter_mut().zip(gout) {
                        *d += v;
                    }
                }
                Op::Affine {
                    w,
                    b,
                    x,
                    x_off,
                    x_len,
                } => {
                    let (xo, _) = self.range(*x);
                    let xs = xo + x_off;
                    let xv = &self.data[xs..xs + x_len];
                    outer_acc(gout, xv, grads.get_mut(*w), None);
                    for (d, v) in grads.get_mut(*b).iter_mut().zip(gout) {
                        *d += v;
                    }
                    if !matches!(self.nodes[x.0].op, Op::Input) {
                        affine_transpose_acc(store.value(*w), gout, &mut up[xs..xs + x_len]);
                    }
                }
                Op::Lstm { cell, x, state, aux } => {
                    let hd = cell.hidden;
                    let gates = &self.aux[*aux..*aux + 4 * hd];
                    let (xo, xl) = self.range(*x);
                    let (so, _) = self.range(*state);
                    let xv = &self.data[xo..xo + xl];
                    let hv = &self.data[so..so + hd];
                    let cv = &self.data[so + hd..so + 2 * hd];
                    let c_new = &out[hd..2 * hd];
                    let dh = &gout[..hd];
                    let dc_out = &gout[hd..2 * hd];
                    let mut dpre = vec![0.0; 4 * hd];
                    let mut dc_prev = vec![0.0; hd];
                    for k in 0..hd {
                        let (i, f, gg, o) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
                        let tc = c_new[k].tanh();
                        let d_o = dh[k] * tc;
                        let dc = dc_out[k] + dh[k] * o * (1.0 - tc * tc);
                        dpre[k] = dc * gg * i * (1.0 - i);
                        dpre[hd + k] = dc * cv[k] * f * (1.0 - f);
                        dpre[2 * hd + k] = dc * i * (1.0 - gg * gg);
                        dpre[3 * hd + k] = d_o * o * (1.0 - o);
                        dc_prev[k] = dc * f;
                    }
                    outer_acc(&dpre, xv, grads.get_mut(cell.w_ih), None);
                    outer_acc(&dpre, hv, grads.get_mut(cell.w_hh), None);
                    for (d, v) in grads.get_mut(cell.bias).iter_mut().zip(&dpre) {
                        *d += v;
                    }
                    if !matches!(self.nodes[x.0].op, Op::Input) {
                        affine_transpose_acc(store.value(cell.w_ih), &dpre, &mut up[xo..xo + xl]);
                    }
                    if !matches!(self.nodes[state.0].op, Op::Input) {
                        affine_transpose_acc(store.value(cell.w_hh), &dpre, &mut up[so..so + hd]);
                        for (d, v) in up[so + hd..so + 2 * hd].iter_mut().zip(&dc_prev) {
                            *d += v;
                        }
                    }
                }
                Op::Concat { start, count } => {
                    let mut pos = 0;
                    for p in &self.lists[*start..*start + *count] {
                        let (po, pl) = self.range(*p);
                        for (d, v) in up[po..po + pl].iter_mut().zip(&gout[pos..pos + pl]) {
                            *d += v;
                        }
                        pos += pl;
                    }
                }
                Op::Slice { x, off: so } => {
                    let (xo, _) = self.range(*x);
                    for (d, v) in up[xo + so..xo + so + len].iter_mut().zip(gout) {
                        *d += v;
                    }
                }
                Op::Tanh(x) => {
                    let (xo, _) = self.range(*x);
                    for k in 0..len {
                        up[xo + k] += gout[k] * (1.0 - out[k] * out[k]);
                    }
                }
                Op::Sigmoid(x) => {
                    let (xo, _) = self.range(*x);
                    for k in 0..len {
                        up[xo + k] += gout[k] * out[k] * (1.0 - out[k]);
                    }
                }
                Op::Softplus(x) => {
                    let (xo, _) = self.range(*x);
                    for k in 0..len {
                        up[xo + k] += gout[k] * sigmoid(self.data[xo + k]);
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let (ao, _) = self.range(*a);
                    let (bo, _) = self.range(*b);
                    for k in 0..len {
                        up[ao + k] += gout[k];
                    }
                    for k in 0..len {
                        up[bo + k] += sign * gout[k];
                    }
                }
                Op::Mul(a, b) => {
                    let (ao, _) = self.range(*a);
                    let (bo, _) = self.range(*b);
                    for k in 0..len {
                        let (av, bv) = (self.data[ao + k], self.data[bo + k]);
                        up[ao + k] += gout[k] * bv;
                        up[bo + k] += gout[k] * av;
                    }
                }
                Op::AddConst(x) => {
                    let (xo, _) = self.range(*x);
                    for k in 0..len {
                        up[xo + k] += gout[k];
                    }
                }
                Op::Scale(x, c) => {
                    let (xo, _) = self.range(*x);
                    for k in 0..len {
                        up[xo + k] += gout[k] * c;
                    }
                }
                Op::Sum(x) => {
                    let (xo, xl) = self.range(*x);
                    for d in &mut up[xo..xo + xl] {
                        *d += gout[0];
                    }
                }
                Op::SumList { start, count } => {
                    for p in &self.lists[*start..*start + *count] {
                        let (po, _) = self.range(*p);
                        up[po] += gout[0];
                    }
                }
                Op::NormalLp { mean, std, x } => {
                    let (mo, _) = self.range(*mean);
                    let (so, _) = self.range(*std);
                    let (m, s) = (self.data[mo], self.data[so]);
                    let z = (x - m) / s;
                    up[mo] += gout[0] * z / s;
                    up[so] += gout[0] * (z * z - 1.0) / s;
                }
                Op::NormalHeadLp { head, z, floor } => {
                    let (ho, _) = self.range(*head);
                    let (m, raw) = (self.data[ho], self.data[ho + 1]);
                    let s = softplus(raw) + floor;
                    let u = (z - m) / s;
                    up[ho] += gout[0] * u / s;
                    up[ho + 1] += gout[0] * (u * u - 1.0) / s * sigmoid(raw);
                }
                Op::CategoricalLp { logits, index } => {
                    let (lo, ll) = self.range(*logits);
                    let p = super::dist::softmax(&self.data[lo..lo + ll]);
                    for k in 0..ll {
                        let ind = if k == *index { 1.0 } else { 0.0 };
                        up[lo + k] += gout[0] * (ind - p[k]);
                    }
                }
            }
        }
    }
}
