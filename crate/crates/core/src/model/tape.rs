//! Row-major matrices and a reverse-mode tape over the handful of
//! operations the attention model needs.

use crate::codec::Row;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape mismatch");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Strided view for the GEMM kernel.
#[derive(Clone, Copy)]
struct View {
    ptr: *const f64,
    rs: isize,
    cs: isize,
}

/// `c = alpha * a(m x k) * b(k x n) + beta * c`.
///
/// # Safety
/// The views must address at least the implied `m x k`, `k x n` and `m x n`
/// elements, and `c` must not alias `a` or `b`.
#[allow(clippy::too_many_arguments)]
unsafe fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: View, b: View, beta: f64, c: *mut f64, rsc: isize, csc: isize) {
    matrixmultiply::dgemm(m, k, n, alpha, a.ptr, a.rs, a.cs, b.ptr, b.rs, b.cs, beta, c, rsc, csc);
}

fn view(m: &Mat, transpose: bool) -> View {
    if transpose {
        View {
            ptr: m.data.as_ptr(),
            rs: 1,
            cs: m.cols as isize,
        }
    } else {
        View {
            ptr: m.data.as_ptr(),
            rs: m.cols as isize,
            cs: 1,
        }
    }
}

/// `op(a) * op(b)` accumulated into `out` with weight `beta` on the old value.
pub fn matmul_into(out: &mut Mat, a: &Mat, ta: bool, b: &Mat, tb: bool, beta: f64) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!((out.rows, out.cols), (m, n), "output shape");
    // SAFETY: shapes were checked above and out is a distinct allocation.
    unsafe {
        gemm(m, k, n, 1.0, view(a, ta), view(b, tb), beta, out.data.as_mut_ptr(), n as isize, 1);
    }
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.rows, b.cols);
    matmul_into(&mut out, a, false, b, false, 0.0);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044715;

/// Attention layout: `groups` independent sequences stacked as rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnShape {
    pub groups: usize,
    pub q_len: usize,
    pub k_len: usize,
    pub heads: usize,
    pub causal: bool,
}

enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    AddPos { x: Var, p: Var, len: usize },
    LayerNorm { x: Var, g: Var, b: Var, xhat: Vec<f64>, inv: Vec<f64> },
    Gelu(Var),
    Attention { q: Var, k: Var, v: Var, shape: AttnShape, probs: Vec<f64> },
    Blend { table: Var, rows: Vec<Row> },
    CrossEntropy { logits: Var, targets: Vec<Option<Row>>, probs: Vec<f64>, count: usize },
}

struct Node {
    value: Option<Mat>,
    op: Op,
}

/// Computation graph over borrowed parameters. Values are computed eagerly
/// as nodes are added; [`Graph::backward`] returns parameter gradients.
pub struct Graph<'p> {
    params: &'p [Mat],
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p [Mat]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(i)) => &self.params[*i],
            _ => unreachable!("only parameters are stored by reference"),
        }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, m: Mat) -> Var {
        self.push(m, Op::Input)
    }

    pub fn param(&mut self, idx: usize) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(idx),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = matmul(self.value(a), self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Adds the `1 x cols` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        let bias = self.value(b);
        assert_eq!(bias.data.len(), out.cols);
        for r in 0..out.rows {
            for (x, y) in out.row_mut(r).iter_mut().zip(&bias.data) {
                *x += y;
            }
        }
        self.push(out, Op::AddRow(a, b))
    }

    /// Adds row `i % len` of the position table `p` to row `i` of `x`.
    pub fn add_positions(&mut self, x: Var, p: Var, len: usize) -> Var {
        let mut out = self.value(x).clone();
        let table = self.value(p);
        assert!(len <= table.rows, "sequence longer than the position table");
        for r in 0..out.rows {
            for (a, b) in out.row_mut(r).iter_mut().zip(table.row(r % len)) {
                *a += b;
            }
        }
        self.push(out, Op::AddPos { x, p, len })
    }

    pub fn layer_norm(&mut self, x: Var, g: Var, b: Var) -> Var {
        let xm = self.value(x);
        let (rows, cols) = (xm.rows, xm.cols);
        let gain = &self.value(g).data;
        let bias = &self.value(b).data;
        let mut xhat = vec![0.0; rows * cols];
        let mut inv = vec![0.0; rows];
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let row = xm.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let s = 1.0 / (var + LN_EPS).sqrt();
            inv[r] = s;
            for c in 0..cols {
                let h = (row[c] - mean) * s;
                xhat[r * cols + c] = h;
                out.data[r * cols + c] = h * gain[c] + bias[c];
            }
        }
        self.push(out, Op::LayerNorm { x, g, b, xhat, inv })
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in &mut out.data {
            let x = *v;
            *v = 0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh());
        }
        self.push(out, Op::Gelu(x))
    }

    /// Scaled dot-product attention per group and head over column blocks.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, shape: AttnShape) -> Var {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let d = qm.cols;
        let AttnShape {
            groups,
            q_len: lq,
            k_len: lk,
            heads,
            causal,
        } = shape;
        assert_eq!(d % heads, 0);
        assert_eq!(qm.rows, groups * lq);
        assert_eq!(km.rows, groups * lk);
        assert!(!causal || lq == lk);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; groups * heads * lq * lk];
        let mut out = Mat::zeros(qm.rows, d);
        for g in 0..groups {
            for h in 0..heads {
                let p = &mut probs[(g * heads + h) * lq * lk..][..lq * lk];
                let qo = g * lq * d + h * dh;
                let ko = g * lk * d + h * dh;
                // SAFETY: offsets stay within the q/k/v/out buffers for lq/lk rows of stride d.
                unsafe {
                    gemm(
                        lq,
                        dh,
                        lk,
                        scale,
                        View { ptr: qm.data.as_ptr().add(qo), rs: d as isize, cs: 1 },
                        View { ptr: km.data.as_ptr().add(ko), rs: 1, cs: d as isize },
                        0.0,
                        p.as_mut_ptr(),
                        lk as isize,
                        1,
                    );
                }
                for i in 0..lq {
                    let row = &mut p[i * lk..(i + 1) * lk];
                    let valid = if causal { i + 1 } else { lk };
                    let m = row[..valid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for x in &mut row[..valid] {
                        *x = (*x - m).exp();
                        z += *x;
                    }
                    for x in &mut row[..valid] {
                        *x /= z;
                    }
                    for x in &mut row[valid..] {
                        *x = 0.0;
                    }
                }
                unsafe {
                    gemm(
                        lq,
                        lk,
                        dh,
                        1.0,
                        View { ptr: p.as_ptr(), rs: lk as isize, cs: 1 },
                        View { ptr: vm.data.as_ptr().add(ko), rs: d as isize, cs: 1 },
                        0.0,
                        out.data.as_mut_ptr().add(qo),
                        d as isize,
                        1,
                    );
                }
            }
        }
        self.push(out, Op::Attention { q, k, v, shape, probs })
    }

    /// Row `r` of the result is the weighted sum of `table` rows named by `rows[r]`.
    pub fn blend(&mut self, table: Var, rows: Vec<Row>) -> Var {
        let t = self.value(table);
        let mut out = Mat::zeros(rows.len(), t.cols);
        for (r, row) in rows.iter().enumerate() {
            for (idx, w) in row.entries() {
                for (o, e) in out.row_mut(r).iter_mut().zip(t.row(idx)) {
                    *o += w * e;
                }
            }
        }
        self.push(out, Op::Blend { table, rows })
    }

    /// Mean soft-target cross-entropy over rows with a target; `None` rows
    /// are padding. All-padding input gives zero.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<Option<Row>>) -> Var {
        let lm = self.value(logits);
        assert_eq!(lm.rows, targets.len(), "one target per logit row");
        let v = lm.cols;
        let mut probs = vec![0.0; lm.rows * v];
        let mut total = 0.0;
        let mut count = 0;
        for (r, t) in targets.iter().enumerate() {
            let Some(t) = t else { continue };
            let row = lm.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
            let lse = m + z.ln();
            for c in 0..v {
                probs[r * v + c] = (row[c] - lse).exp();
            }
            total -= t.entries().map(|(idx, w)| w * (row[idx] - lse)).sum::<f64>();
            count += 1;
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        self.push(
            Mat::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            },
        )
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Vec<Mat> {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::from_vec(1, 1, vec![1.0]));
        let mut pgrads: Vec<Mat> = self.params.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..self.nodes.len()).rev() {
            let Some(dout) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(p) => pgrads[*p].add_assign(&dout),
                Op::MatMul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    let mut da = Mat::zeros(am.rows, am.cols);
                    matmul_into(&mut da, &dout, false, bm, true, 0.0);
                    let mut db = Mat::zeros(bm.rows, bm.cols);
                    matmul_into(&mut db, am, true, &dout, false, 0.0);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, dout.clone());
                    acc(&mut grads, *a, dout);
                }
                Op::AddRow(a, b) => {
                    let mut db = Mat::zeros(1, dout.cols);
                    for r in 0..dout.rows {
                        for (x, y) in db.data.iter_mut().zip(dout.row(r)) {
                            *x += y;
                        }
                    }
                    acc(&mut grads, *b, db);
                    acc(&mut grads, *a, dout);
                }
                Op::AddPos { x, p, len } => {
                    let pm = self.value(*p);
                    let mut dp = Mat::zeros(pm.rows, pm.cols);
                    for r in 0..dout.rows {
                        for (a, b) in dp.row_mut(r % len).iter_mut().zip(dout.row(r)) {
                            *a += b;
                        }
                    }
                    acc(&mut grads, *p, dp);
                    acc(&mut grads, *x, dout);
                }
                Op::LayerNorm { x, g, b, xhat, inv } => {
                    let cols = dout.cols;
                    let gain = &self.value(*g).data;
                    let mut dx = Mat::zeros(dout.rows, cols);
                    let mut dg = Mat::zeros(1, cols);
                    let mut db = Mat::zeros(1, cols);
                    for r in 0..dout.rows {
                        let dy = dout.row(r);
                        let xh = &xhat[r * cols..(r + 1) * cols];
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for c in 0..cols {
                            let d = dy[c] * gain[c];
                            mean_d += d;
                            mean_dx += d * xh[c];
                            dg.data[c] += dy[c] * xh[c];
                            db.data[c] += dy[c];
                        }
                        mean_d /= cols as f64;
                        mean_dx /= cols as f64;
                        let out = dx.row_mut(r);
                        for c in 0..cols {
                            out[c] = inv[r] * (dy[c] * gain[c] - mean_d - xh[c] * mean_dx);
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *g, dg);
                    acc(&mut grads, *b, db);
                }
                Op::Gelu(x) => {
                    let xm = self.value(*x);
                    let mut dx = dout;
                    for (d, &x) in dx.data.iter_mut().zip(&xm.data) {
                        let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
                        let du = GELU_C * (1.0 + 3.0 * GELU_K * x * x);
                        *d *= 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Attention { q, k, v, shape, probs } => {
                    let (dq, dk, dv) = self.attention_backward(*q, *k, *v, *shape, probs, &dout);
                    acc(&mut grads, *q, dq);
                    acc(&mut grads, *k, dk);
                    acc(&mut grads, *v, dv);
                }
                Op::Blend { table, rows } => {
                    let t = self.value(*table);
                    let mut dt = Mat::zeros(t.rows, t.cols);
                    for (r, row) in rows.iter().enumerate() {
                        for (idx, w) in row.entries() {
                            for (a, b) in dt.row_mut(idx).iter_mut().zip(dout.row(r)) {
                                *a += w * b;
                            }
                        }
                    }
                    acc(&mut grads, *table, dt);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                    count,
                } => {
                    let lm = self.value(*logits);
                    let mut dl = Mat::zeros(lm.rows, lm.cols);
                    if *count > 0 {
                        let s = dout.data[0] / *count as f64;
                        for (r, t) in targets.iter().enumerate() {
                            let Some(t) = t else { continue };
                            let row = dl.row_mut(r);
                            for (c, x) in row.iter_mut().enumerate() {
                                *x = s * probs[r * lm.cols + c];
                            }
                            for (idx, w) in t.entries() {
                                row[idx] -= s * w;
                            }
                        }
                    }
                    acc(&mut grads, *logits, dl);
                }
            }
        }
        pgrads
    }

    fn attention_backward(&self, q: Var, k: Var, v: Var, shape: AttnShape, probs: &[f64], dout: &Mat) -> (Mat, Mat, Mat) {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let d = qm.cols;
        let AttnShape {
            groups,
            q_len: lq,
            k_len: lk,
            heads,
            ..
        } = shape;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Mat::zeros(qm.rows, d);
        let mut dk = Mat::zeros(km.rows, d);
        let mut dv = Mat::zeros(vm.rows, d);
        let mut ds = vec![0.0; lq * lk];
        for g in 0..groups {
            for h in 0..heads {
                let p = &probs[(g * heads + h) * lq * lk..][..lq * lk];
                let qo = g * lq * d + h * dh;
                let ko = g * lk * d + h * dh;
                // SAFETY: same addressing as the forward pass; outputs are fresh buffers.
                unsafe {
                    // dP = dO V^T
                    gemm(
                        lq,
                        dh,
                        lk,
                        1.0,
                        View { ptr: dout.data.as_ptr().add(qo), rs: d as isize, cs: 1 },
                        View { ptr: vm.data.as_ptr().add(ko), rs: 1, cs: d as isize },
                        0.0,
                        ds.as_mut_ptr(),
                        lk as isize,
                        1,
                    );
                    // dV = P^T dO
                    gemm(
                        lk,
                        lq,
                        dh,
                        1.0,
                        View { ptr: p.as_ptr(), rs: 1, cs: lk as isize },
                        View { ptr: dout.data.as_ptr().add(qo), rs: d as isize, cs: 1 },
                        1.0,
                        dv.data.as_mut_ptr().add(ko),
                        d as isize,
                        1,
                    );
                }
                for i in 0..lq {
                    let pr = &p[i * lk..(i + 1) * lk];
                    let dr = &mut ds[i * lk..(i + 1) * lk];
                    let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                    for (x, &pp) in dr.iter_mut().zip(pr) {
                        *x = pp * (*x - dot) * scale;
                    }
                }
                unsafe {
                    // dQ = dS K
                    gemm(
                        lq,
                        lk,
                        dh,
                        1.0,
                        View { ptr: ds.as_ptr(), rs: lk as isize, cs: 1 },
                        View { ptr: km.data.as_ptr().add(ko), rs: d as isize, cs: 1 },
                        1.0,
                        dq.data.as_mut_ptr().add(qo),
                        d as isize,
                        1,
                    );
                    // dK = dS^T Q
                    gemm(
                        lk,
                        lq,
                        dh,
                        1.0,
                        View { ptr: ds.as_ptr(), rs: 1, cs: lk as isize },
                        View { ptr: qm.data.as_ptr().add(qo), rs: d as isize, cs: 1 },
                        1.0,
                        dk.data.as_mut_ptr().add(ko),
                        d as isize,
                        1,
                    );
                }
            }
        }
        (dq, dk, dv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_transposes() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 1, vec![1.0, 0.0, -1.0]);
        assert_eq!(matmul(&a, &b).data, vec![-2.0, -2.0]);
        let mut out = Mat::zeros(3, 3);
        matmul_into(&mut out, &a, true, &a, false, 0.0);
        assert_eq!(out.data[0], 17.0);
        assert_eq!(out.data[4], 29.0);
    }

    #[test]
    fn cross_entropy_lower_bound() {
        // logits = ln(target) reach the row entropy
        let params = vec![];
        let mut g = Graph::new(&params);
        let row = Row {
            first: (0, 0.36),
            second: Some((1, 0.64)),
        };
        let l = g.input(Mat::from_vec(1, 3, vec![0.36f64.ln(), 0.64f64.ln(), -1e9]));
        let loss = g.cross_entropy(l, vec![Some(row)]);
        let entropy = -0.36 * 0.36f64.ln() - 0.64 * 0.64f64.ln();
        assert!((g.value(loss).data[0] - entropy).abs() < 1e-12);
        assert!((entropy - 0.6534).abs() < 1e-4);

        let l = g.input(Mat::zeros(2, 3));
        let pad = g.cross_entropy(l, vec![None, None]);
        assert_eq!(g.value(pad).data[0], 0.0);
    }
}
