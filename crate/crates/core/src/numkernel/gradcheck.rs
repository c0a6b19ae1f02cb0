//! Finite-difference verification of the tape's gradients.
//!
//! The function under test is written once against the generic [`Tape`], so
//! the reverse pass can run in `f32` while the central differences are always
//! taken in `f64`.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A scalar-valued function of a list of 2-D inputs, buildable at any precision.
pub trait ScalarFn {
    fn build<T: Scalar>(&self, tape: &mut Tape<T>, inputs: &[Var]) -> Result<Var>;
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step as a fraction of `max(1, |x|)`.
    pub step: f64,
    /// Denominator floor added to `|central difference|`.
    pub eps: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-4, eps: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(input index, flat offset)` of the worst coordinate.
    pub worst: (usize, usize),
    pub autodiff: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

fn eval_f64<F: ScalarFn>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64> {
    let mut tape = Tape::<f64>::new();
    let vars = leaves(&mut tape, inputs, false)?;
    let out = f.build(&mut tape, &vars)?;
    Ok(tape.scalar_value(out))
}

fn leaves<T: Scalar>(tape: &mut Tape<T>, inputs: &[Tensor<f64>], grad: bool) -> Result<Vec<Var>> {
    inputs
        .iter()
        .map(|t| {
            let c = t.cast::<T>();
            tape.leaf(c.rows(), c.cols(), c.data, grad)
        })
        .collect()
}

/// Gradient of `f` at `inputs` computed by reverse mode in precision `T`.
pub fn autodiff_grad<T: Scalar, F: ScalarFn>(f: &F, inputs: &[Tensor<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::<T>::new();
    let vars = leaves(&mut tape, inputs, true)?;
    let out = f.build(&mut tape, &vars)?;
    if tape.shape(out) != (1, 1) {
        return Err(Error::Shape("grad_check needs a scalar function".into()));
    }
    tape.backward(out)?;
    let grads = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| match tape.grad(v) {
            Some(g) => g.iter().map(|x| x.as_f64()).collect(),
            None => vec![0.0; t.numel()],
        })
        .collect();
    Ok((tape.scalar_value(out).as_f64(), grads))
}

/// Max over all input coordinates of `|autodiff - fd| / (|fd| + eps)`, with
/// the reverse pass in precision `T` and central differences in `f64`.
pub fn grad_check<T: Scalar, F: ScalarFn>(
    f: &F,
    inputs: &[Tensor<f64>],
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let (_, ad) = autodiff_grad::<T, F>(f, inputs)?;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst: (0, 0), autodiff: 0.0, numeric: 0.0, coordinates: 0 };
    for i in 0..work.len() {
        for j in 0..work[i].numel() {
            let x = work[i].data[j];
            let h = opts.step * x.abs().max(1.0);
            work[i].data[j] = x + h;
            let up = eval_f64(f, &work)?;
            work[i].data[j] = x - h;
            let down = eval_f64(f, &work)?;
            work[i].data[j] = x;
            let fd = (up - down) / (2.0 * h);
            let err = (ad[i][j] - fd).abs() / (fd.abs() + opts.eps);
            report.coordinates += 1;
            if err > report.max_rel_err || report.coordinates == 1 {
                report.max_rel_err = err;
                report.worst = (i, j);
                report.autodiff = ad[i][j];
                report.numeric = fd;
            }
        }
    }
    Ok(report)
}
