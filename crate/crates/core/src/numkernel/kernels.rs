//! Plain forward kernels shared by the differentiable tape and the no-grad
//! inference path, so both compute bit-identical values for the same rows.

use crate::scalar::{gemm, MatMut, MatRef, Scalar};

pub const LN_EPS: f64 = 1e-5;

/// Tanh approximation of GELU.
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::lit(0.797_884_560_802_865_4); // sqrt(2/pi)
    let half = T::lit(0.5);
    let inner = c * (x + T::lit(0.044715) * x * x * x);
    half * x * (T::one() + inner.tanh())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::lit(0.797_884_560_802_865_4);
    let half = T::lit(0.5);
    let x2 = x * x;
    let inner = c * (x + T::lit(0.044715) * x2 * x);
    let t = inner.tanh();
    let dinner = c * (T::one() + T::lit(3.0 * 0.044715) * x2);
    half * (T::one() + t) + half * x * (T::one() - t * t) * dinner
}

/// `out = x * w + bias` for dense `x: [n, k]`, `w: [k, m]`.
pub fn linear<T: Scalar>(x: &[T], n: usize, k: usize, w: &[T], m: usize, bias: Option<&[T]>, out: &mut [T]) {
    debug_assert_eq!(out.len(), n * m);
    match bias {
        Some(b) => {
            for r in 0..n {
                out[r * m..(r + 1) * m].copy_from_slice(b);
            }
            gemm(T::one(), MatRef::dense(x, n, k), MatRef::dense(w, k, m), T::one(), MatMut::dense(out, n, m));
        }
        None => gemm(T::one(), MatRef::dense(x, n, k), MatRef::dense(w, k, m), T::zero(), MatMut::dense(out, n, m)),
    }
}

/// Row-wise layer norm. Optionally records the normalized input and the
/// reciprocal standard deviation for the backward pass.
pub fn layer_norm<T: Scalar>(
    x: &[T],
    cols: usize,
    gamma: &[T],
    beta: &[T],
    out: &mut [T],
    mut xhat_out: Option<&mut [T]>,
    mut rstd_out: Option<&mut [T]>,
) {
    let n = x.len() / cols;
    let inv = T::one() / T::lit(cols as f64);
    let eps = T::lit(LN_EPS);
    for r in 0..n {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().copied().sum::<T>() * inv;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv;
        let rstd = T::one() / (var + eps).sqrt();
        if let Some(rs) = rstd_out.as_deref_mut() {
            rs[r] = rstd;
        }
        for c in 0..cols {
            let xh = (row[c] - mean) * rstd;
            if let Some(xo) = xhat_out.as_deref_mut() {
                xo[r * cols + c] = xh;
            }
            out[r * cols + c] = xh * gamma[c] + beta[c];
        }
    }
}

/// In-place numerically stable softmax over one row; `valid` leading entries
/// take part, the rest are set to zero.
pub fn softmax_prefix<T: Scalar>(row: &mut [T], valid: usize) {
    let max = row[..valid].iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row[..valid].iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = T::one() / sum;
    for v in row[..valid].iter_mut() {
        *v *= inv;
    }
    for v in row[valid..].iter_mut() {
        *v = T::zero();
    }
}

/// Layout of a fused `[q | k | v]` projection row: `heads` heads of width `head_dim`.
#[derive(Clone, Copy, Debug)]
pub struct HeadLayout {
    pub heads: usize,
    pub head_dim: usize,
}

impl HeadLayout {
    pub fn d_model(&self) -> usize {
        self.heads * self.head_dim
    }
}

/// Causal attention of `nq` query rows against `nk` key/value rows for one head.
///
/// Query `i` sits at absolute position `q_offset + i` and may see keys
/// `0..=q_offset + i`. Probabilities are written into `probs` (`nq x nk`).
#[allow(clippy::too_many_arguments)]
pub fn causal_head<T: Scalar>(
    q: MatRef<'_, T>,
    k: MatRef<'_, T>,
    v: MatRef<'_, T>,
    q_offset: usize,
    scale: T,
    probs: &mut [T],
    out: MatMut<'_, T>,
) {
    let nq = q.rows;
    let nk = k.rows;
    gemm(scale, q, k.t(), T::zero(), MatMut::dense(probs, nq, nk));
    for i in 0..nq {
        let valid = (q_offset + i + 1).min(nk);
        softmax_prefix(&mut probs[i * nk..(i + 1) * nk], valid);
    }
    gemm(T::one(), MatRef::dense(probs, nq, nk), v, T::zero(), out);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut row = vec![1.0f64, 2.0, 3.0, 100.0];
        softmax_prefix(&mut row, 3);
        let s: f64 = row.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(row[3], 0.0);
        assert!(row.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }
}
