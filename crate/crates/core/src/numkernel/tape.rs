//! Wengert tape for reverse-mode differentiation of matrix programs.
//!
//! Every node stores its forward value. Operations are recorded in
//! execution order, so a reverse sweep over the node list visits each node
//! after all of its consumers. Leaves are either constants or parameters;
//! only parameters receive entries in [`Gradients`].

use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Additive stand-in for a masked attention logit.
pub const MASK_FILL: f64 = -9999.0;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

pub type ParamId = usize;

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    /// a · bᵀ
    MatMulT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// a[m,n] + b[1,n]
    AddRow(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Exp(usize),
    Ln(usize),
    SoftmaxRows {
        x: usize,
        mask: Option<Vec<bool>>,
    },
    LogSoftmaxRows(usize),
    /// `x / max(‖x‖, eps)`; `eps = 0` is the strict form.
    L2NormalizeRows(usize, f64),
    Sum(usize),
    MeanRows(usize),
    Transpose(usize),
    GatherRows(usize, Vec<usize>),
    ConcatRows(Vec<usize>),
    Pick(usize, usize),
    /// out[j, v] = q[j] · k[v·n + j]
    BlockDots {
        q: usize,
        k: usize,
        blocks: usize,
    },
    /// out[j] = Σ_v a[j, v] · x[v·n + j]
    BlockMix {
        a: usize,
        x: usize,
        blocks: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded computation. Single owner; build one per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every parameter leaf it reached.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    /// Gradient for `id`, or zeros shaped like `like` when unreachable.
    pub fn get_or_zeros(&self, id: ParamId, like: &Tensor) -> Tensor {
        self.by_param
            .get(&id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.by_param.iter().map(|(k, v)| (*k, v))
    }
}

// Raw kernels. Shapes: a is m×k, b is k×n (mm), n×k (mm_t), or a is k×m (tm).
fn mm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn mm_t(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

fn tm(a: &[f64], k: usize, m: usize, b: &[f64], n: usize) -> Vec<f64> {
    // aᵀ (m×k) · b (k×n)
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    t.as_matrix_shape()
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

    pub fn shape(&self, v: Var) -> (usize, usize) {
        dims(&self.nodes[v.0].value)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push_matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>, op: Op) -> Var {
        self.push(Tensor::matrix(rows, cols, data), op)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId, value: Tensor) -> Var {
        self.push(value, Op::Param(id))
    }

    /// Same value as `v`, cut off from gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul {m}x{k} by {k2}x{n}");
        let out = mm(self.value(a).data(), m, k, self.value(b).data(), n);
        self.push_matrix(m, n, out, Op::MatMul(a.0, b.0))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_t {m}x{k} by ({n}x{k2})ᵀ");
        let out = mm_t(self.value(a).data(), m, k, self.value(b).data(), n);
        self.push_matrix(m, n, out, Op::MatMulT(a.0, b.0))
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, name: &str) -> Var {
        let (m, n) = self.shape(a);
        assert_eq!((m, n), self.shape(b), "{name}: shape mismatch");
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        self.push_matrix(m, n, data, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a.0, b.0), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a.0, b.0), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a.0, b.0), "mul")
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (m, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "add_row: bias must be 1x{n}");
        let r = self.value(row).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (x, b) in chunk.iter_mut().zip(&r) {
                *x += b;
            }
        }
        self.push_matrix(m, n, data, Op::AddRow(a.0, row.0))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (m, n) = self.shape(a);
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        self.push_matrix(m, n, data, op)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a.0, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a.0))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a.0))
    }

    /// Row-wise softmax. Masked entries (`mask[r * cols + c] == true`) have
    /// their logit replaced by [`MASK_FILL`] before exponentiation.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (m, n) = self.shape(a);
        let mut data = self.value(a).data().to_vec();
        if let Some(mask) = mask {
            if mask.len() != m * n {
                return Err(Error::shape(
                    "softmax_rows",
                    format!("mask of {} entries for {m}x{n} logits", mask.len()),
                ));
            }
            for r in 0..m {
                let row_mask = &mask[r * n..(r + 1) * n];
                if row_mask.iter().all(|&x| x) {
                    return Err(Error::DegenerateMask { row: r });
                }
                for (v, &masked) in data[r * n..(r + 1) * n].iter_mut().zip(row_mask) {
                    if masked {
                        *v = MASK_FILL;
                    }
                }
            }
        }
        for row in data.chunks_mut(n) {
            softmax_in_place(row);
        }
        Ok(self.push_matrix(
            m,
            n,
            data,
            Op::SoftmaxRows {
                x: a.0,
                mask: mask.map(<[bool]>::to_vec),
            },
        ))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.push_matrix(m, n, data, Op::LogSoftmaxRows(a.0))
    }

    /// Row-wise L2 normalisation; any zero row is an error.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::ZeroNorm);
            }
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        Ok(self.push_matrix(m, n, data, Op::L2NormalizeRows(a.0, 0.0)))
    }

    /// Row-wise `x / max(‖x‖, eps)`; zero rows stay zero.
    pub fn l2_normalize_rows_eps(&mut self, a: Var, eps: f64) -> Var {
        let (m, n) = self.shape(a);
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(eps);
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        self.push_matrix(m, n, data, Op::L2NormalizeRows(a.0, eps))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a.0))
    }

    /// Column means: `[m, n] -> [1, n]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let mut out = vec![0.0; n];
        for row in self.value(a).data().chunks(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= m as f64;
        }
        self.push_matrix(1, n, out, Op::MeanRows(a.0))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let src = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        self.push_matrix(n, m, out, Op::Transpose(a.0))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let (m, n) = self.shape(a);
        assert!(idx.iter().all(|&i| i < m), "gather_rows index out of range");
        let t = self.value(a).select_rows(idx);
        self.push_matrix(idx.len(), n, t.into_data(), Op::GatherRows(a.0, idx.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let n = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            assert_eq!(c, n, "concat_rows: column mismatch");
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        self.push_matrix(rows, n, data, Op::ConcatRows(parts.iter().map(|p| p.0).collect()))
    }

    /// Scalar element `(row, col)` of a matrix.
    pub fn pick(&mut self, a: Var, row: usize, col: usize) -> Var {
        let (m, n) = self.shape(a);
        assert!(row < m && col < n, "pick out of range");
        let flat = row * n + col;
        let v = self.value(a).data()[flat];
        self.push(Tensor::scalar(v), Op::Pick(a.0, flat))
    }

    /// `q: [n, d]`, `k: [blocks·n, d]` → `[n, blocks]` with
    /// `out[j, b] = q[j] · k[b·n + j]`.
    pub fn block_dots(&mut self, q: Var, k: Var, blocks: usize) -> Var {
        let (n, d) = self.shape(q);
        assert_eq!(self.shape(k), (blocks * n, d), "block_dots: key layout");
        let qd = self.value(q).data();
        let kd = self.value(k).data();
        let mut out = vec![0.0; n * blocks];
        for j in 0..n {
            let qr = &qd[j * d..(j + 1) * d];
            for b in 0..blocks {
                let r = b * n + j;
                let kr = &kd[r * d..(r + 1) * d];
                out[j * blocks + b] = qr.iter().zip(kr).map(|(x, y)| x * y).sum();
            }
        }
        self.push_matrix(n, blocks, out, Op::BlockDots { q: q.0, k: k.0, blocks })
    }

    /// `a: [n, blocks]`, `x: [blocks·n, d]` → `[n, d]` with
    /// `out[j] = Σ_b a[j, b] · x[b·n + j]`.
    pub fn block_mix(&mut self, a: Var, x: Var, blocks: usize) -> Var {
        let (n, b2) = self.shape(a);
        assert_eq!(b2, blocks, "block_mix: weight columns");
        let (xr, d) = self.shape(x);
        assert_eq!(xr, blocks * n, "block_mix: value layout");
        let ad = self.value(a).data();
        let xd = self.value(x).data();
        let mut out = vec![0.0; n * d];
        for j in 0..n {
            let orow = &mut out[j * d..(j + 1) * d];
            for b in 0..blocks {
                let w = ad[j * blocks + b];
                let r = b * n + j;
                for (o, v) in orow.iter_mut().zip(&xd[r * d..(r + 1) * d]) {
                    *o += w * v;
                }
            }
        }
        self.push_matrix(n, d, out, Op::BlockMix { a: a.0, x: x.0, blocks })
    }

    /// Reverse sweep from scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::shape("backward", format!("loss has {} elements", lv.len())));
        }
        if !lv.item().is_finite() {
            return Err(Error::NonFinite {
                what: "loss".into(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let val = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let t = Tensor::new(val.shape().to_vec(), g).expect("grad shape");
                    match out.by_param.get_mut(id) {
                        Some(acc) => {
                            for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                                *a += b;
                            }
                        }
                        None => {
                            out.by_param.insert(*id, t);
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = dims(&self.nodes[*a].value);
                    let n = dims(&self.nodes[*b].value).1;
                    let da = mm_t(&g, m, n, self.nodes[*b].value.data(), k);
                    let db = tm(self.nodes[*a].value.data(), m, k, &g, n);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::MatMulT(a, b) => {
                    let (m, k) = dims(&self.nodes[*a].value);
                    let n = dims(&self.nodes[*b].value).0;
                    let da = mm(&g, m, n, self.nodes[*b].value.data(), k);
                    let db = tm(&g, m, n, self.nodes[*a].value.data(), k);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.iter().map(|v| -v).collect());
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[*a].value.data();
                    let bv = self.nodes[*b].value.data();
                    acc(&mut grads, *a, g.iter().zip(bv).map(|(x, y)| x * y).collect());
                    acc(&mut grads, *b, g.iter().zip(av).map(|(x, y)| x * y).collect());
                }
                Op::AddRow(a, b) => {
                    let n = dims(val).1;
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        for (o, v) in db.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *b, db);
                    acc(&mut grads, *a, g);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.iter().map(|v| v * s).collect()),
                Op::Tanh(a) => acc(
                    &mut grads,
                    *a,
                    g.iter().zip(val.data()).map(|(g, y)| g * (1.0 - y * y)).collect(),
                ),
                Op::Sigmoid(a) => acc(
                    &mut grads,
                    *a,
                    g.iter().zip(val.data()).map(|(g, y)| g * y * (1.0 - y)).collect(),
                ),
                Op::Relu(a) => {
                    let x = self.nodes[*a].value.data();
                    acc(
                        &mut grads,
                        *a,
                        g.iter().zip(x).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect(),
                    )
                }
                Op::Exp(a) => acc(&mut grads, *a, g.iter().zip(val.data()).map(|(g, y)| g * y).collect()),
                Op::Ln(a) => {
                    let x = self.nodes[*a].value.data();
                    acc(&mut grads, *a, g.iter().zip(x).map(|(g, x)| g / x).collect())
                }
                Op::SoftmaxRows { x, mask } => {
                    let n = dims(val).1;
                    let mut dx = vec![0.0; g.len()];
                    for ((dr, gr), yr) in dx.chunks_mut(n).zip(g.chunks(n)).zip(val.data().chunks(n)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((d, gv), y) in dr.iter_mut().zip(gr).zip(yr) {
                            *d = y * (gv - dot);
                        }
                    }
                    if let Some(mask) = mask {
                        for (d, &masked) in dx.iter_mut().zip(mask) {
                            if masked {
                                *d = 0.0;
                            }
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::LogSoftmaxRows(a) => {
                    let n = dims(val).1;
                    let mut dx = vec![0.0; g.len()];
                    for ((dr, gr), yr) in dx.chunks_mut(n).zip(g.chunks(n)).zip(val.data().chunks(n)) {
                        let gs: f64 = gr.iter().sum();
                        for ((d, gv), y) in dr.iter_mut().zip(gr).zip(yr) {
                            *d = gv - y.exp() * gs;
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::L2NormalizeRows(a, eps) => {
                    let n = dims(val).1;
                    let x = self.nodes[*a].value.data();
                    let mut dx = vec![0.0; g.len()];
                    for r in 0..dx.len() / n {
                        let s = r * n..(r + 1) * n;
                        let norm = x[s.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
                        let gr = &g[s.clone()];
                        if norm <= *eps {
                            for (d, gv) in dx[s].iter_mut().zip(gr) {
                                *d = gv / eps;
                            }
                            continue;
                        }
                        let y = &val.data()[s.clone()];
                        let dot: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                        for ((d, gv), yv) in dx[s].iter_mut().zip(gr).zip(y) {
                            *d = (gv - yv * dot) / norm;
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::Sum(a) => {
                    let len = self.nodes[*a].value.len();
                    acc(&mut grads, *a, vec![g[0]; len]);
                }
                Op::MeanRows(a) => {
                    let (m, _) = dims(&self.nodes[*a].value);
                    let mut dx = Vec::with_capacity(m * g.len());
                    for _ in 0..m {
                        dx.extend(g.iter().map(|v| v / m as f64));
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::Transpose(a) => {
                    let (m, n) = dims(&self.nodes[*a].value);
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            dx[i * n + j] = g[j * m + i];
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::GatherRows(a, idx) => {
                    let (m, n) = dims(&self.nodes[*a].value);
                    let mut dx = vec![0.0; m * n];
                    for (k, &src) in idx.iter().enumerate() {
                        for (d, gv) in dx[src * n..(src + 1) * n].iter_mut().zip(&g[k * n..(k + 1) * n]) {
                            *d += gv;
                        }
                    }
                    acc(&mut grads, *a, dx);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.nodes[p].value.len();
                        acc(&mut grads, p, g[off..off + len].to_vec());
                        off += len;
                    }
                }
                Op::Pick(a, flat) => {
                    let mut dx = vec![0.0; self.nodes[*a].value.len()];
                    dx[*flat] = g[0];
                    acc(&mut grads, *a, dx);
                }
                Op::BlockDots { q, k, blocks } => {
                    let (n, d) = dims(&self.nodes[*q].value);
                    let qd = self.nodes[*q].value.data();
                    let kd = self.nodes[*k].value.data();
                    let mut dq = vec![0.0; n * d];
                    let mut dk = vec![0.0; blocks * n * d];
                    for j in 0..n {
                        for b in 0..*blocks {
                            let gv = g[j * blocks + b];
                            if gv == 0.0 {
                                continue;
                            }
                            let r = b * n + j;
                            for t in 0..d {
                                dq[j * d + t] += gv * kd[r * d + t];
                                dk[r * d + t] += gv * qd[j * d + t];
                            }
                        }
                    }
                    acc(&mut grads, *q, dq);
                    acc(&mut grads, *k, dk);
                }
                Op::BlockMix { a, x, blocks } => {
                    let (n, _) = dims(&self.nodes[*a].value);
                    let d = dims(val).1;
                    let ad = self.nodes[*a].value.data();
                    let xd = self.nodes[*x].value.data();
                    let mut da = vec![0.0; n * blocks];
                    let mut dxv = vec![0.0; blocks * n * d];
                    for j in 0..n {
                        let gr = &g[j * d..(j + 1) * d];
                        for b in 0..*blocks {
                            let r = b * n + j;
                            let xr = &xd[r * d..(r + 1) * d];
                            da[j * blocks + b] = gr.iter().zip(xr).map(|(p, q)| p * q).sum();
                            let w = ad[j * blocks + b];
                            for (o, gv) in dxv[r * d..(r + 1) * d].iter_mut().zip(gr) {
                                *o += w * gv;
                            }
                        }
                    }
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *x, dxv);
                }
            }
        }
        Ok(out)
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], idx: usize, g: Vec<f64>) {
    match &mut grads[idx] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(&g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}
