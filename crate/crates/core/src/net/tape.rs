//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Operations append nodes to a [`Tape`]; [`Tape::backward`] walks them in
//! reverse, consuming the tape. Only the operations this model needs exist.
//! The GRU recurrence is a single fused node whose backward pass performs
//! backpropagation through time with batched matrix products.

use super::tensor::{gemm, gemm_raw, Op as Trans, Tensor};
use super::NetError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulCol(usize, usize),
    DivCol(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Abs(usize),
    SliceCols(usize, usize),
    SumCols(usize),
    Sum(usize),
    Mean(usize),
    NormRows(usize),
    Cross(usize, usize),
    SoftmaxXent(usize, Vec<usize>),
    Gru(Box<GruSaved>),
}

#[derive(Debug)]
struct GruSaved {
    x: usize,
    w: usize,
    u: usize,
    b: usize,
    steps: usize,
    batch: usize,
    hidden: usize,
    /// Hidden states `h_0..h_T`, each `batch × hidden`.
    hs: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    rh: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf whose gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a.0, b.0), &[a.0, b.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a.0, b.0), &[a.0, b.0])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a.0, b.0), &[a.0, b.0])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a.0, b.0), &[a.0, b.0])
    }

    /// `a[m,n] + row[1,n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (av, rv) = (self.value(a), self.value(row));
        assert_eq!([1, av.cols()], rv.shape(), "add_row shape");
        let mut v = av.clone();
        for r in 0..v.rows() {
            for (x, b) in v.row_mut(r).iter_mut().zip(rv.data()) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a.0, row.0), &[a.0, row.0])
    }

    fn col_broadcast(&self, a: Var, col: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, cv) = (self.value(a), self.value(col));
        assert_eq!([av.rows(), 1], cv.shape(), "column broadcast shape");
        let mut v = av.clone();
        for r in 0..v.rows() {
            let c = cv.data()[r];
            for x in v.row_mut(r) {
                *x = f(*x, c);
            }
        }
        v
    }

    /// `a[m,n] ⊙ col[m,1]` broadcast over columns.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let v = self.col_broadcast(a, col, |x, c| x * c);
        self.push(v, Op::MulCol(a.0, col.0), &[a.0, col.0])
    }

    pub fn div_col(&mut self, a: Var, col: Var) -> Var {
        let v = self.col_broadcast(a, col, |x, c| x / c);
        self.push(v, Op::DivCol(a.0, col.0), &[a.0, col.0])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a.0, s), &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a.0), &[a.0])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a.0), &[a.0])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= self.value(a).cols(), "slice_cols out of range");
        let v = self.value(a).cols_range(start, len);
        self.push(v, Op::SliceCols(a.0, start), &[a.0])
    }

    /// Row sums, `[m,n] → [m,1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let v = Tensor::from_vec(av.rows(), 1, (0..av.rows()).map(|r| av.row(r).iter().sum()).collect());
        self.push(v, Op::SumCols(a.0), &[a.0])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::from_vec(1, 1, vec![self.value(a).sum()]);
        self.push(v, Op::Sum(a.0), &[a.0])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let v = Tensor::from_vec(1, 1, vec![av.sum() / av.len() as f64]);
        self.push(v, Op::Mean(a.0), &[a.0])
    }

    /// Euclidean norm of every row, `[m,n] → [m,1]`.
    pub fn norm_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let v = Tensor::from_vec(
            av.rows(),
            1,
            (0..av.rows())
                .map(|r| av.row(r).iter().map(|x| x * x).sum::<f64>().sqrt())
                .collect(),
        );
        self.push(v, Op::NormRows(a.0), &[a.0])
    }

    /// Row-wise cross product of two `[m,3]` tensors.
    pub fn cross(&mut self, a: Var, b: Var) -> Var {
        let v = cross_rows(self.value(a), self.value(b));
        self.push(v, Op::Cross(a.0, b.0), &[a.0, b.0])
    }

    /// Per-row softmax cross-entropy against class indices, `[m,k] → [m,1]`.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), labels.len(), "one label per row");
        let v = Tensor::from_vec(
            lv.rows(),
            1,
            (0..lv.rows())
                .map(|r| softmax_xent_row(lv.row(r), labels[r]))
                .collect(),
        );
        self.push(v, Op::SoftmaxXent(logits.0, labels.to_vec()), &[logits.0])
    }

    /// Runs a GRU from a zero state over `steps` time-major blocks of `x`
    /// (`[steps·batch, input]`) and returns the final state `[batch, hidden]`.
    ///
    /// Gate columns of `w [input, 3H]`, `u [H, 3H]` and `b [1, 3H]` are
    /// ordered update, reset, candidate.
    pub fn gru(&mut self, x: Var, w: Var, u: Var, b: Var, steps: usize) -> Var {
        let (xv, wv, uv, bv) = (self.value(x), self.value(w), self.value(u), self.value(b));
        let hidden = uv.rows();
        let g3 = 3 * hidden;
        assert!(steps > 0 && xv.rows() % steps == 0, "gru input rows must split into steps");
        assert_eq!(uv.cols(), g3, "gru hidden weight shape");
        assert_eq!(wv.shape(), [xv.cols(), g3], "gru input weight shape");
        assert_eq!(bv.shape(), [1, g3], "gru bias shape");
        let batch = xv.rows() / steps;
        let bh = batch * hidden;
        let mut a = Tensor::zeros(xv.rows(), g3);
        gemm(Trans::N, Trans::N, 1.0, xv, wv, 0.0, &mut a);
        for r in 0..a.rows() {
            for (v, bb) in a.row_mut(r).iter_mut().zip(bv.data()) {
                *v += bb;
            }
        }
        let mut hs = vec![0.0; (steps + 1) * bh];
        let mut z = vec![0.0; steps * bh];
        let mut r = vec![0.0; steps * bh];
        let mut c = vec![0.0; steps * bh];
        let mut rh = vec![0.0; steps * bh];
        let mut gh = vec![0.0; batch * g3];
        let ud = uv.data();
        for t in 0..steps {
            let (done, next) = hs.split_at_mut((t + 1) * bh);
            let h = &done[t * bh..];
            gemm_raw(batch, hidden, 2 * hidden, 1.0, h, hidden, 1, ud, g3, 1, 0.0, &mut gh, g3, 1);
            let base = t * bh;
            for i in 0..batch {
                let arow = a.row(t * batch + i);
                for j in 0..hidden {
                    let k = i * hidden + j;
                    let zz = sigmoid(arow[j] + gh[i * g3 + j]);
                    let rr = sigmoid(arow[hidden + j] + gh[i * g3 + hidden + j]);
                    z[base + k] = zz;
                    r[base + k] = rr;
                    rh[base + k] = rr * h[k];
                }
            }
            gemm_raw(
                batch,
                hidden,
                hidden,
                1.0,
                &rh[base..base + bh],
                hidden,
                1,
                &ud[2 * hidden..],
                g3,
                1,
                0.0,
                &mut gh[2 * hidden..],
                g3,
                1,
            );
            for i in 0..batch {
                let arow = a.row(t * batch + i);
                for j in 0..hidden {
                    let k = i * hidden + j;
                    let cc = (arow[2 * hidden + j] + gh[i * g3 + 2 * hidden + j]).tanh();
                    c[base + k] = cc;
                    next[k] = h[k] + z[base + k] * (cc - h[k]);
                }
            }
        }
        let out = Tensor::from_vec(batch, hidden, hs[steps * bh..].to_vec());
        let saved = GruSaved {
            x: x.0,
            w: w.0,
            u: u.0,
            b: b.0,
            steps,
            batch,
            hidden,
            hs,
            z,
            r,
            c,
            rh,
        };
        self.push(out, Op::Gru(Box::new(saved)), &[x.0, w.0, u.0, b.0])
    }

    /// `Σ wₖ·termₖ`, summed in the given order.
    pub fn weighted_sum(&mut self, terms: &[(f64, Var)]) -> Var {
        let mut total: Option<Var> = None;
        for &(w, v) in terms {
            let s = self.scale(v, w);
            total = Some(match total {
                Some(t) => self.add(t, s),
                None => s,
            });
        }
        total.expect("at least one term")
    }

    /// Backpropagates from the scalar `loss`, consuming the recorded tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, NetError> {
        if loss.0 >= self.nodes.len() {
            return Err(NetError::BackwardWithoutForward);
        }
        let shape = self.nodes[loss.0].value.shape();
        if shape != [1, 1] {
            return Err(NetError::NonScalarLoss(shape));
        }
        let nodes = std::mem::take(&mut self.nodes);
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let needs = |j: usize| nodes[j].requires_grad;
            let val = |j: usize| &nodes[j].value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if needs(*a) {
                        let mut ga = Tensor::zeros(val(*a).rows(), val(*a).cols());
                        gemm(Trans::N, Trans::T, 1.0, &g, val(*b), 0.0, &mut ga);
                        accumulate(&mut grads[*a], ga);
                    }
                    if needs(*b) {
                        let mut gb = Tensor::zeros(val(*b).rows(), val(*b).cols());
                        gemm(Trans::T, Trans::N, 1.0, val(*a), &g, 0.0, &mut gb);
                        accumulate(&mut grads[*b], gb);
                    }
                }
                Op::Add(a, b) => {
                    if needs(*a) {
                        accumulate(&mut grads[*a], g.clone());
                    }
                    if needs(*b) {
                        accumulate(&mut grads[*b], g);
                    }
                }
                Op::Sub(a, b) => {
                    if needs(*a) {
                        accumulate(&mut grads[*a], g.clone());
                    }
                    if needs(*b) {
                        accumulate(&mut grads[*b], g.scale(-1.0));
                    }
                }
                Op::Mul(a, b) => {
                    if needs(*a) {
                        accumulate(&mut grads[*a], g.zip_map(val(*b), |x, y| x * y));
                    }
                    if needs(*b) {
                        accumulate(&mut grads[*b], g.zip_map(val(*a), |x, y| x * y));
                    }
                }
                Op::AddRow(a, row) => {
                    if needs(*row) {
                        let mut gr = Tensor::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (s, v) in gr.data_mut().iter_mut().zip(g.row(r)) {
                                *s += v;
                            }
                        }
                        accumulate(&mut grads[*row], gr);
                    }
                    if needs(*a) {
                        accumulate(&mut grads[*a], g);
                    }
                }
                Op::MulCol(a, col) | Op::DivCol(a, col) => {
                    let div = matches!(node.op, Op::DivCol(..));
                    let (av, cv) = (val(*a), val(*col));
                    if needs(*col) {
                        let gc = (0..g.rows())
                            .map(|r| {
                                let s: f64 = g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum();
                                let c = cv.data()[r];
                                if div {
                                    -s / (c * c)
                                } else {
                                    s
                                }
                            })
                            .collect();
                        accumulate(&mut grads[*col], Tensor::from_vec(g.rows(), 1, gc));
                    }
                    if needs(*a) {
                        let mut ga = g;
                        for r in 0..ga.rows() {
                            let c = cv.data()[r];
                            for x in ga.row_mut(r) {
                                *x = if div { *x / c } else { *x * c };
                            }
                        }
                        accumulate(&mut grads[*a], ga);
                    }
                }
                Op::Scale(a, s) => accumulate(&mut grads[*a], g.scale(*s)),
                Op::Relu(a) => {
                    accumulate(&mut grads[*a], g.zip_map(val(*a), |x, y| if y > 0.0 { x } else { 0.0 }))
                }
                Op::Abs(a) => accumulate(
                    &mut grads[*a],
                    g.zip_map(val(*a), |x, y| {
                        if y > 0.0 {
                            x
                        } else if y < 0.0 {
                            -x
                        } else {
                            0.0
                        }
                    }),
                ),
                Op::SliceCols(a, start) => {
                    let av = val(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..g.rows() {
                        ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads[*a], ga);
                }
                Op::SumCols(a) => {
                    let av = val(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        ga.row_mut(r).fill(g.data()[r]);
                    }
                    accumulate(&mut grads[*a], ga);
                }
                Op::Sum(a) => {
                    let av = val(*a);
                    accumulate(&mut grads[*a], Tensor::filled(av.rows(), av.cols(), g.data()[0]));
                }
                Op::Mean(a) => {
                    let av = val(*a);
                    let s = g.data()[0] / av.len() as f64;
                    accumulate(&mut grads[*a], Tensor::filled(av.rows(), av.cols(), s));
                }
                Op::NormRows(a) => {
                    let av = val(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        let n = node.value.data()[r];
                        if n > 0.0 {
                            let s = g.data()[r] / n;
                            for (d, x) in ga.row_mut(r).iter_mut().zip(av.row(r)) {
                                *d = s * x;
                            }
                        }
                    }
                    accumulate(&mut grads[*a], ga);
                }
                Op::Cross(a, b) => {
                    if needs(*a) {
                        accumulate(&mut grads[*a], cross_rows(val(*b), &g));
                    }
                    if needs(*b) {
                        accumulate(&mut grads[*b], cross_rows(&g, val(*a)));
                    }
                }
                Op::SoftmaxXent(a, labels) => {
                    let av = val(*a);
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        let row = av.row(r);
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|v| (v - m).exp()).sum();
                        for (k, d) in ga.row_mut(r).iter_mut().enumerate() {
                            let p = (row[k] - m).exp() / denom;
                            let y = if k == labels[r] { 1.0 } else { 0.0 };
                            *d = g.data()[r] * (p - y);
                        }
                    }
                    accumulate(&mut grads[*a], ga);
                }
                Op::Gru(s) => gru_backward(s, &g, &nodes, &mut grads),
            }
        }
        Ok(Gradients { grads })
    }
}

fn gru_backward(s: &GruSaved, g: &Tensor, nodes: &[Node], grads: &mut [Option<Tensor>]) {
    let (steps, batch, hidden) = (s.steps, s.batch, s.hidden);
    let (bh, g3) = (batch * hidden, 3 * hidden);
    let ud = nodes[s.u].value.data();
    let mut dh = g.data().to_vec();
    let mut dprev = vec![0.0; bh];
    let mut d_rh = vec![0.0; bh];
    // pre-activation gradients, time-major, laid out like the gate columns
    let mut dg = Tensor::zeros(steps * batch, g3);
    for t in (0..steps).rev() {
        let base = t * bh;
        let h = &s.hs[base..base + bh];
        for i in 0..batch {
            let row = dg.row_mut(t * batch + i);
            for j in 0..hidden {
                let k = i * hidden + j;
                let (z, c) = (s.z[base + k], s.c[base + k]);
                let d = dh[k];
                row[j] = d * (c - h[k]) * z * (1.0 - z);
                row[2 * hidden + j] = d * z * (1.0 - c * c);
                dprev[k] = d * (1.0 - z);
            }
        }
        let dgd = dg.data_mut();
        let off = t * batch * g3;
        gemm_raw(
            batch,
            hidden,
            hidden,
            1.0,
            &dgd[off + 2 * hidden..],
            g3,
            1,
            &ud[2 * hidden..],
            1,
            g3,
            0.0,
            &mut d_rh,
            hidden,
            1,
        );
        for i in 0..batch {
            for j in 0..hidden {
                let k = i * hidden + j;
                let r = s.r[base + k];
                dgd[off + i * g3 + hidden + j] = d_rh[k] * h[k] * r * (1.0 - r);
                dprev[k] += d_rh[k] * r;
            }
        }
        gemm_raw(
            batch,
            2 * hidden,
            hidden,
            1.0,
            &dgd[off..],
            g3,
            1,
            ud,
            1,
            g3,
            1.0,
            &mut dprev,
            hidden,
            1,
        );
        std::mem::swap(&mut dh, &mut dprev);
    }
    let rows = steps * batch;
    if nodes[s.w].requires_grad {
        let wv = &nodes[s.w].value;
        let mut gw = Tensor::zeros(wv.rows(), wv.cols());
        gemm(Trans::T, Trans::N, 1.0, &nodes[s.x].value, &dg, 0.0, &mut gw);
        accumulate(&mut grads[s.w], gw);
    }
    if nodes[s.b].requires_grad {
        let mut gb = Tensor::zeros(1, g3);
        for r in 0..rows {
            for (a, v) in gb.data_mut().iter_mut().zip(dg.row(r)) {
                *a += v;
            }
        }
        accumulate(&mut grads[s.b], gb);
    }
    if nodes[s.u].requires_grad {
        let mut gu = Tensor::zeros(hidden, g3);
        let dgd = dg.data();
        let gud = gu.data_mut();
        // update and reset gates see h_{t}, the candidate sees r ⊙ h_{t}
        gemm_raw(hidden, rows, 2 * hidden, 1.0, &s.hs, 1, hidden, dgd, g3, 1, 0.0, gud, g3, 1);
        gemm_raw(
            hidden,
            rows,
            hidden,
            1.0,
            &s.rh,
            1,
            hidden,
            &dgd[2 * hidden..],
            g3,
            1,
            0.0,
            &mut gud[2 * hidden..],
            g3,
            1,
        );
        accumulate(&mut grads[s.u], gu);
    }
    if nodes[s.x].requires_grad {
        let xv = &nodes[s.x].value;
        let mut gx = Tensor::zeros(xv.rows(), xv.cols());
        gemm(Trans::N, Trans::T, 1.0, &dg, &nodes[s.w].value, 0.0, &mut gx);
        accumulate(&mut grads[s.x], gx);
    }
}

fn cross_rows(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "cross shape");
    assert_eq!(a.cols(), 3, "cross needs 3 columns");
    let mut out = Tensor::zeros(a.rows(), 3);
    for r in 0..a.rows() {
        let (x, y) = (a.row(r), b.row(r));
        out.row_mut(r).copy_from_slice(&[
            x[1] * y[2] - x[2] * y[1],
            x[2] * y[0] - x[0] * y[2],
            x[0] * y[1] - x[1] * y[0],
        ]);
    }
    out
}

/// `-log softmax(row)[label]`, accurate when the label dominates.
pub(crate) fn softmax_xent_row(row: &[f64], label: usize) -> f64 {
    let (imax, m) = row
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bm), (i, v)| if *v > bm { (i, *v) } else { (bi, bm) });
    let rest: f64 = row
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != imax)
        .map(|(_, v)| (v - m).exp())
        .sum();
    m - row[label] + rest.ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central-difference check of every leaf gradient of `f`.
    fn check(leaves: Vec<Tensor>, f: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = leaves.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        let grads = tape.backward(loss).unwrap();
        let eval = |ls: &[Tensor]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = ls.iter().map(|x| t.constant(x.clone())).collect();
            let l = f(&mut t, &vs);
            t.value(l).data()[0]
        };
        let eps = 1e-6;
        for (k, leaf) in leaves.iter().enumerate() {
            let analytic = grads.get(vars[k]).cloned().unwrap_or(Tensor::zeros(leaf.rows(), leaf.cols()));
            for e in 0..leaf.len() {
                let mut plus = leaves.clone();
                plus[k].data_mut()[e] += eps;
                let mut minus = leaves.clone();
                minus[k].data_mut()[e] -= eps;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                let a = analytic.data()[e];
                assert!((fd - a).abs() < 1e-6 * (1.0 + a.abs()), "leaf {k} elem {e}: {a} vs {fd}");
            }
        }
    }

    fn rand(rows: usize, cols: usize, seed: u64) -> Tensor {
        Tensor::uniform(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn elementwise_and_matmul_gradients() {
        check(vec![rand(3, 4, 1), rand(4, 2, 2), rand(1, 2, 3)], |t, v| {
            let m = t.matmul(v[0], v[1]);
            let m = t.add_row(m, v[2]);
            let s = t.mul(m, m);
            let a = t.abs(m);
            let d = t.sub(s, a);
            let r = t.relu(d);
            let q = t.add(r, m);
            let q = t.scale(q, 0.7);
            t.mean(q)
        });
    }

    #[test]
    fn geometric_gradients() {
        check(vec![rand(4, 3, 4), rand(4, 3, 5)], |t, v| {
            let n = t.norm_rows(v[0]);
            let u = t.div_col(v[0], n);
            let c = t.cross(u, v[1]);
            let d = t.sum_cols(c);
            let w = t.mul_col(v[1], d);
            let s = t.slice_cols(w, 1, 2);
            t.sum(s)
        });
    }

    #[test]
    fn softmax_xent_gradient_and_values() {
        check(vec![rand(3, 2, 6)], |t, v| {
            let l = t.softmax_xent(v[0], &[0, 1, 1]);
            t.sum(l)
        });
        assert!((softmax_xent_row(&[0.0, 0.0], 1) - std::f64::consts::LN_2).abs() < 1e-16);
        let small = softmax_xent_row(&[10.0, -10.0], 0);
        assert!((small - (-20f64).exp().ln_1p()).abs() < 1e-24);
        assert!((small - 2.0611536e-9).abs() < 1e-15);
    }

    #[test]
    fn gru_gradients_through_time() {
        let (steps, batch, input, hidden) = (4, 2, 3, 5);
        check(
            vec![
                rand(steps * batch, input, 7),
                rand(input, 3 * hidden, 8),
                rand(hidden, 3 * hidden, 9),
                rand(1, 3 * hidden, 10),
            ],
            |t, v| {
                let h = t.gru(v[0], v[1], v[2], v[3], steps);
                let s = t.mul(h, h);
                t.sum(s)
            },
        );
    }

    #[test]
    fn backward_consumes_the_tape() {
        let mut t = Tape::new();
        let a = t.param(Tensor::filled(1, 1, 2.0));
        let l = t.mul(a, a);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[4.0]);
        assert!(t.is_empty());
        assert!(matches!(t.backward(l), Err(NetError::BackwardWithoutForward)));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let a = t.param(Tensor::zeros(2, 2));
        assert!(matches!(t.backward(a), Err(NetError::NonScalarLoss(_))));
    }
}
