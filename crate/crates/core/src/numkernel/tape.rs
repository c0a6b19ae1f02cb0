//! Reverse-mode autodiff over 2-D row-major values.
//!
//! A [`Tape`] records every operation of one forward pass together with the
//! values the backward pass needs. [`Tape::backward`] replays it in reverse.
//! Parameters are copied in by id and their gradients read back with
//! [`Tape::param_grads`].

use std::collections::HashMap;

use super::kernels::{self, HeadLayout};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{gemm, MatMut, MatRef, Scalar};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Contiguous run of rows forming one causal sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

enum Op<T> {
    Leaf,
    Param,
    Linear { x: Var, w: Var, bias: Option<Var> },
    MatMulT { a: Var, b: Var },
    Add { a: Var, b: Var },
    AddScaled { a: Var, b: Var, alpha: T },
    Gelu { x: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    Gather { table: Var, ids: Vec<Option<usize>> },
    SelectRows { x: Var, rows: Vec<usize> },
    Attention { qkv: Var, segments: Vec<Segment>, layout: HeadLayout, probs: Vec<T> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<T> },
    Mse { a: Var, b: Var },
    CosineDistance { a: Var, b: Var },
}

struct Node<T> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    params: HashMap<usize, Var>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new(), params: HashMap::new() }
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { rows, cols, value, op, needs_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    /// Gradient accumulated into `v` by the last [`Tape::backward`], if any.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, value: Vec<T>, requires_grad: bool) -> Result<Var> {
        if value.len() != rows * cols {
            return Err(Error::Shape(format!("leaf {rows}x{cols} given {} values", value.len())));
        }
        Ok(self.push(rows, cols, value, Op::Leaf, requires_grad))
    }

    /// Registers a parameter tensor (copied once per tape) under `id`.
    pub fn param(&mut self, id: usize, t: &Tensor<T>) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(t.rows(), t.cols(), t.data.clone(), Op::Param, true);
        self.params.insert(id, v);
        v
    }

    /// Gradients of all registered parameters after [`Tape::backward`].
    pub fn param_grads(&self) -> impl Iterator<Item = (usize, &[T])> + '_ {
        self.params.iter().filter_map(|(&id, v)| self.grads[v.0].as_deref().map(|g| (id, g)))
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
        Error::Shape(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
    }

    /// `x * w (+ bias)` with `x: [n, k]`, `w: [k, m]`, `bias: [m]`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let (n, k) = self.shape(x);
        let (wk, m) = self.shape(w);
        if k != wk {
            return Err(Self::shape_err("linear", (n, k), (wk, m)));
        }
        if let Some(b) = bias {
            if self.nodes[b.0].value.len() != m {
                return Err(Error::Shape(format!("linear bias needs {m} values")));
            }
        }
        let mut out = vec![T::zero(); n * m];
        kernels::linear(
            &self.nodes[x.0].value,
            n,
            k,
            &self.nodes[w.0].value,
            m,
            bias.map(|b| self.nodes[b.0].value.as_slice()),
            &mut out,
        );
        let ng = self.ng(x) || self.ng(w) || bias.is_some_and(|b| self.ng(b));
        Ok(self.push(n, m, out, Op::Linear { x, w, bias }, ng))
    }

    /// `a * b^T` with `a: [n, k]`, `b: [m, k]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.shape(a);
        let (m, bk) = self.shape(b);
        if k != bk {
            return Err(Self::shape_err("matmul_t", (n, k), (m, bk)));
        }
        let mut out = vec![T::zero(); n * m];
        gemm(
            T::one(),
            MatRef::dense(&self.nodes[a.0].value, n, k),
            MatRef::dense(&self.nodes[b.0].value, m, k).t(),
            T::zero(),
            MatMut::dense(&mut out, n, m),
        );
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(n, m, out, Op::MatMulT { a, b }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.add_scaled(a, b, T::one()).map(|v| {
            if let Op::AddScaled { a, b, .. } = self.nodes[v.0].op {
                self.nodes[v.0].op = Op::Add { a, b };
            }
            v
        })
    }

    /// `a + alpha * b` for equal shapes.
    pub fn add_scaled(&mut self, a: Var, b: Var, alpha: T) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Self::shape_err("add", sa, sb));
        }
        let out: Vec<T> =
            self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(&x, &y)| x + alpha * y).collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(sa.0, sa.1, out, Op::AddScaled { a, b, alpha }, ng))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = self.nodes[x.0].value.iter().map(|&v| kernels::gelu(v)).collect();
        let ng = self.ng(x);
        self.push(r, c, out, Op::Gelu { x }, ng)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if self.nodes[gamma.0].value.len() != c || self.nodes[beta.0].value.len() != c {
            return Err(Error::Shape(format!("layer_norm affine params need {c} values")));
        }
        let mut out = vec![T::zero(); r * c];
        let mut xhat = vec![T::zero(); r * c];
        let mut rstd = vec![T::zero(); r];
        kernels::layer_norm(
            &self.nodes[x.0].value,
            c,
            &self.nodes[gamma.0].value,
            &self.nodes[beta.0].value,
            &mut out,
            Some(&mut xhat),
            Some(&mut rstd),
        );
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(r, c, out, Op::LayerNorm { x, gamma, beta, xhat, rstd }, ng))
    }

    /// Row lookup into `table`; `None` yields a zero row.
    pub fn gather(&mut self, table: Var, ids: Vec<Option<usize>>) -> Result<Var> {
        let (tr, c) = self.shape(table);
        let mut out = vec![T::zero(); ids.len() * c];
        for (i, id) in ids.iter().enumerate() {
            if let Some(id) = *id {
                if id >= tr {
                    return Err(Error::Input(format!("gather id {id} out of range for {tr} rows")));
                }
                out[i * c..(i + 1) * c].copy_from_slice(&self.nodes[table.0].value[id * c..(id + 1) * c]);
            }
        }
        let ng = self.ng(table);
        Ok(self.push(ids.len(), c, out, Op::Gather { table, ids }, ng))
    }

    pub fn select_rows(&mut self, x: Var, rows: Vec<usize>) -> Result<Var> {
        let (xr, c) = self.shape(x);
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in &rows {
            if r >= xr {
                return Err(Error::Input(format!("row {r} out of range for {xr} rows")));
            }
            out.extend_from_slice(&self.nodes[x.0].value[r * c..(r + 1) * c]);
        }
        let ng = self.ng(x);
        Ok(self.push(rows.len(), c, out, Op::SelectRows { x, rows }, ng))
    }

    /// Multi-head causal self-attention over packed sequences.
    ///
    /// `qkv` is `[n, 3 * d_model]` laid out as `[q | k | v]`; every segment
    /// attends only within itself. Rows outside all segments produce zeros.
    pub fn causal_attention(&mut self, qkv: Var, segments: Vec<Segment>, layout: HeadLayout) -> Result<Var> {
        let (n, c) = self.shape(qkv);
        let d = layout.d_model();
        if c != 3 * d {
            return Err(Error::Shape(format!("attention input has {c} cols, expected {}", 3 * d)));
        }
        for s in &segments {
            if s.start + s.len > n {
                return Err(Error::Shape(format!("segment {s:?} exceeds {n} rows")));
            }
        }
        let scale = T::one() / T::lit(layout.head_dim as f64).sqrt();
        let total: usize = segments.iter().map(|s| s.len * s.len * layout.heads).sum();
        let mut probs = vec![T::zero(); total];
        let mut out = vec![T::zero(); n * d];
        let src = &self.nodes[qkv.0].value;
        let mut off = 0;
        for s in &segments {
            for h in 0..layout.heads {
                let dh = layout.head_dim;
                let q = MatRef::block(src, c, s.start, s.len, h * dh, dh);
                let k = MatRef::block(src, c, s.start, s.len, d + h * dh, dh);
                let v = MatRef::block(src, c, s.start, s.len, 2 * d + h * dh, dh);
                let p = &mut probs[off..off + s.len * s.len];
                kernels::causal_head(q, k, v, 0, scale, p, MatMut::block(&mut out, d, s.start, s.len, h * dh, dh));
                off += s.len * s.len;
            }
        }
        let ng = self.ng(qkv);
        Ok(self.push(n, d, out, Op::Attention { qkv, segments, layout, probs }, ng))
    }

    /// Mean over rows of `-log softmax(logits[i])[targets[i]]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<usize>) -> Result<Var> {
        let (n, v) = self.shape(logits);
        if targets.len() != n {
            return Err(Error::Shape(format!("{} targets for {n} logit rows", targets.len())));
        }
        if v < 2 {
            return Err(Error::Shape("cross entropy needs at least 2 classes".into()));
        }
        let src = &self.nodes[logits.0].value;
        if !src.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("cross-entropy logits".into()));
        }
        let mut probs = src.clone();
        let mut loss = T::zero();
        for (i, &t) in targets.iter().enumerate() {
            if t >= v {
                return Err(Error::TargetOutOfRange { target: t, classes: v });
            }
            let row = &src[i * v..(i + 1) * v];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
            loss += lse - row[t];
            for j in 0..v {
                probs[i * v + j] = (row[j] - lse).exp();
            }
        }
        loss /= T::lit(n as f64);
        let ng = self.ng(logits);
        Ok(self.push(1, 1, vec![loss], Op::CrossEntropy { logits, targets, probs }, ng))
    }

    /// Mean over all elements of `(a - b)^2`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Self::shape_err("mse", sa, sb));
        }
        let n = T::lit((sa.0 * sa.1).max(1) as f64);
        let s: T = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(&x, &y)| (x - y) * (x - y)).sum();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(1, 1, vec![s / n], Op::Mse { a, b }, ng))
    }

    /// Mean over rows of `1 - cos(a_i, b_i)`; zero-norm rows count as cosine 0.
    pub fn cosine_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Self::shape_err("cosine_distance", sa, sb));
        }
        let (r, c) = sa;
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let mut total = T::zero();
        for i in 0..r {
            total += T::one() - row_cosine(&va[i * c..(i + 1) * c], &vb[i * c..(i + 1) * c]).0;
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(1, 1, vec![total / T::lit(r.max(1) as f64)], Op::CosineDistance { a, b }, ng))
    }

    fn acc(&mut self, v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        // Sized from the shape: backward may have moved the value out.
        let len = self.nodes[v.0].rows * self.nodes[v.0].cols;
        let g = self.grads[v.0].get_or_insert_with(|| vec![T::zero(); len]);
        f(g);
    }

    /// Backpropagates from the scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Shape("backward needs a scalar loss".into()));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(dy) = self.grads[idx].take() else { continue };
            self.backprop_node(idx, &dy);
            self.grads[idx] = Some(dy);
        }
        Ok(())
    }

    fn backprop_node(&mut self, idx: usize, dy: &[T]) {
        // Ops are moved out temporarily so input values can be borrowed freely.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        let (rows, cols) = (self.nodes[idx].rows, self.nodes[idx].cols);
        match &op {
            Op::Leaf | Op::Param => {}
            Op::Linear { x, w, bias } => {
                let (n, k) = self.shape(*x);
                let m = cols;
                if self.ng(*x) {
                    let wv = self.nodes[w.0].value.clone();
                    self.acc(*x, |g| {
                        gemm(
                            T::one(),
                            MatRef::dense(dy, n, m),
                            MatRef::dense(&wv, k, m).t(),
                            T::one(),
                            MatMut::dense(g, n, k),
                        )
                    });
                }
                if self.ng(*w) {
                    let xv = std::mem::take(&mut self.nodes[x.0].value);
                    self.acc(*w, |g| {
                        gemm(
                            T::one(),
                            MatRef::dense(&xv, n, k).t(),
                            MatRef::dense(dy, n, m),
                            T::one(),
                            MatMut::dense(g, k, m),
                        )
                    });
                    self.nodes[x.0].value = xv;
                }
                if let Some(b) = bias {
                    self.acc(*b, |g| {
                        for r in 0..n {
                            for (gv, &d) in g.iter_mut().zip(&dy[r * m..(r + 1) * m]) {
                                *gv += d;
                            }
                        }
                    });
                }
            }
            Op::MatMulT { a, b } => {
                let (n, k) = self.shape(*a);
                let m = cols;
                if self.ng(*a) {
                    let bv = self.nodes[b.0].value.clone();
                    self.acc(*a, |g| {
                        gemm(
                            T::one(),
                            MatRef::dense(dy, n, m),
                            MatRef::dense(&bv, m, k),
                            T::one(),
                            MatMut::dense(g, n, k),
                        )
                    });
                }
                if self.ng(*b) {
                    let av = self.nodes[a.0].value.clone();
                    self.acc(*b, |g| {
                        gemm(
                            T::one(),
                            MatRef::dense(dy, n, m).t(),
                            MatRef::dense(&av, n, k),
                            T::one(),
                            MatMut::dense(g, m, k),
                        )
                    });
                }
            }
            Op::Add { a, b } => {
                self.acc(*a, |g| add_into(g, dy, T::one()));
                self.acc(*b, |g| add_into(g, dy, T::one()));
            }
            Op::AddScaled { a, b, alpha } => {
                self.acc(*a, |g| add_into(g, dy, T::one()));
                let alpha = *alpha;
                self.acc(*b, |g| add_into(g, dy, alpha));
            }
            Op::Gelu { x } => {
                let xv = std::mem::take(&mut self.nodes[x.0].value);
                self.acc(*x, |g| {
                    for ((gv, &d), &xi) in g.iter_mut().zip(dy).zip(&xv) {
                        *gv += d * kernels::gelu_grad(xi);
                    }
                });
                self.nodes[x.0].value = xv;
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let c = cols;
                let inv = T::one() / T::lit(c as f64);
                let gv = self.nodes[gamma.0].value.clone();
                self.acc(*gamma, |g| {
                    for r in 0..rows {
                        for j in 0..c {
                            g[j] += dy[r * c + j] * xhat[r * c + j];
                        }
                    }
                });
                self.acc(*beta, |g| {
                    for r in 0..rows {
                        add_into(g, &dy[r * c..(r + 1) * c], T::one());
                    }
                });
                self.acc(*x, |g| {
                    let mut dxhat = vec![T::zero(); c];
                    for r in 0..rows {
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..c {
                            dxhat[j] = dy[r * c + j] * gv[j];
                            m1 += dxhat[j];
                            m2 += dxhat[j] * xhat[r * c + j];
                        }
                        m1 *= inv;
                        m2 *= inv;
                        for j in 0..c {
                            g[r * c + j] += rstd[r] * (dxhat[j] - m1 - xhat[r * c + j] * m2);
                        }
                    }
                });
            }
            Op::Gather { table, ids } => {
                let c = cols;
                self.acc(*table, |g| {
                    for (i, id) in ids.iter().enumerate() {
                        if let Some(id) = *id {
                            add_into(&mut g[id * c..(id + 1) * c], &dy[i * c..(i + 1) * c], T::one());
                        }
                    }
                });
            }
            Op::SelectRows { x, rows: sel } => {
                let c = cols;
                self.acc(*x, |g| {
                    for (i, &r) in sel.iter().enumerate() {
                        add_into(&mut g[r * c..(r + 1) * c], &dy[i * c..(i + 1) * c], T::one());
                    }
                });
            }
            Op::Attention { qkv, segments, layout, probs } => {
                if self.ng(*qkv) {
                    let src = std::mem::take(&mut self.nodes[qkv.0].value);
                    let layout = *layout;
                    self.acc(*qkv, |g| attention_backward(&src, g, dy, segments, layout, probs));
                    self.nodes[qkv.0].value = src;
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let v = self.shape(*logits).1;
                let scale = dy[0] / T::lit(targets.len() as f64);
                self.acc(*logits, |g| {
                    for (i, &t) in targets.iter().enumerate() {
                        for j in 0..v {
                            let ind = if j == t { T::one() } else { T::zero() };
                            g[i * v + j] += scale * (probs[i * v + j] - ind);
                        }
                    }
                });
            }
            Op::Mse { a, b } => {
                let n = self.nodes[a.0].value.len().max(1);
                let s = T::lit(2.0) * dy[0] / T::lit(n as f64);
                let diff: Vec<T> =
                    self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(&x, &y)| s * (x - y)).collect();
                self.acc(*a, |g| add_into(g, &diff, T::one()));
                self.acc(*b, |g| add_into(g, &diff, -T::one()));
            }
            Op::CosineDistance { a, b } => {
                let (r, c) = self.shape(*a);
                let s = -dy[0] / T::lit(r.max(1) as f64);
                let (va, vb) = (self.nodes[a.0].value.clone(), self.nodes[b.0].value.clone());
                let mut ga = vec![T::zero(); r * c];
                let mut gb = vec![T::zero(); r * c];
                for i in 0..r {
                    let (x, y) = (&va[i * c..(i + 1) * c], &vb[i * c..(i + 1) * c]);
                    let (cos, na, nb) = row_cosine(x, y);
                    if na == T::zero() || nb == T::zero() {
                        continue;
                    }
                    for j in 0..c {
                        ga[i * c + j] = s * (y[j] / (na * nb) - cos * x[j] / (na * na));
                        gb[i * c + j] = s * (x[j] / (na * nb) - cos * y[j] / (nb * nb));
                    }
                }
                self.acc(*a, |g| add_into(g, &ga, T::one()));
                self.acc(*b, |g| add_into(g, &gb, T::one()));
            }
        }
        self.nodes[idx].op = op;
    }
}

fn add_into<T: Scalar>(g: &mut [T], d: &[T], alpha: T) {
    for (gv, &dv) in g.iter_mut().zip(d) {
        *gv += alpha * dv;
    }
}

/// `(cos, |x|, |y|)`; cosine is 0 when either norm is 0.
fn row_cosine<T: Scalar>(x: &[T], y: &[T]) -> (T, T, T) {
    let dot: T = x.iter().zip(y).map(|(&a, &b)| a * b).sum();
    let na = x.iter().map(|&a| a * a).sum::<T>().sqrt();
    let nb = y.iter().map(|&b| b * b).sum::<T>().sqrt();
    if na == T::zero() || nb == T::zero() {
        (T::zero(), na, nb)
    } else {
        (dot / (na * nb), na, nb)
    }
}

fn attention_backward<T: Scalar>(
    src: &[T],
    g: &mut [T],
    dy: &[T],
    segments: &[Segment],
    layout: HeadLayout,
    probs: &[T],
) {
    let d = layout.d_model();
    let c = 3 * d;
    let dh = layout.head_dim;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let mut off = 0;
    for s in segments {
        let n = s.len;
        let mut dp = vec![T::zero(); n * n];
        for h in 0..layout.heads {
            let p = &probs[off..off + n * n];
            off += n * n;
            let q = MatRef::block(src, c, s.start, n, h * dh, dh);
            let k = MatRef::block(src, c, s.start, n, d + h * dh, dh);
            let v = MatRef::block(src, c, s.start, n, 2 * d + h * dh, dh);
            let dout = MatRef::block(dy, d, s.start, n, h * dh, dh);
            // dP = dO V^T
            gemm(T::one(), dout, v.t(), T::zero(), MatMut::dense(&mut dp, n, n));
            // dV += P^T dO
            gemm(
                T::one(),
                MatRef::dense(p, n, n).t(),
                dout,
                T::one(),
                MatMut::block(g, c, s.start, n, 2 * d + h * dh, dh),
            );
            // dS = P * (dP - rowsum(dP * P))
            for i in 0..n {
                let row = &mut dp[i * n..(i + 1) * n];
                let prow = &p[i * n..(i + 1) * n];
                let dot: T = row.iter().zip(prow).map(|(&a, &b)| a * b).sum();
                for (x, &pv) in row.iter_mut().zip(prow) {
                    *x = pv * (*x - dot);
                }
            }
            gemm(scale, MatRef::dense(&dp, n, n), k, T::one(), MatMut::block(g, c, s.start, n, h * dh, dh));
            gemm(scale, MatRef::dense(&dp, n, n).t(), q, T::one(), MatMut::block(g, c, s.start, n, d + h * dh, dh));
        }
    }
}
