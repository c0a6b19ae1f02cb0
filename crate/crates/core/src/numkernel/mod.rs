//! Small reverse-mode numeric kernel: tensors, a recording tape, Adam, and a
//! finite-difference gradient checker.

pub mod gradcheck;
pub mod kernels;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, ScalarFn};
pub use optim::{adam_step, AdamConfig, LrSchedule, OptimizerState, ParamStore};
pub use tape::{Segment, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `-log softmax(logits)[target]`, evaluated with a shifted log-sum-exp.
pub fn cross_entropy<T: Scalar>(logits: &[T], target: usize) -> Result<T> {
    if logits.len() < 2 {
        return Err(Error::Shape("cross entropy needs at least 2 classes".into()));
    }
    if target >= logits.len() {
        return Err(Error::TargetOutOfRange { target, classes: logits.len() });
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("cross-entropy logits".into()));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
    Ok(lse - logits[target])
}

/// Mean of `(a - b)^2` over all elements.
pub fn mse<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("mse over {} vs {} values", a.len(), b.len())));
    }
    if a.is_empty() {
        return Ok(T::zero());
    }
    let s: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok(s / T::lit(a.len() as f64))
}

/// Cosine similarity; `degenerate` is set when either vector has zero norm,
/// in which case `value` is 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cosine<T> {
    pub value: T,
    pub degenerate: bool,
}

pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<Cosine<T>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine over {} vs {} values", a.len(), b.len())));
    }
    let dot: T = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let na = a.iter().map(|&x| x * x).sum::<T>().sqrt();
    let nb = b.iter().map(|&x| x * x).sum::<T>().sqrt();
    if na == T::zero() || nb == T::zero() {
        return Ok(Cosine { value: T::zero(), degenerate: true });
    }
    let v = dot / (na * nb);
    Ok(Cosine { value: v.max(-T::one()).min(T::one()), degenerate: false })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn cross_entropy_uniform_is_ln_v() {
        let l = cross_entropy(&[0.7f64; 4], 2).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_saturated() {
        let l = cross_entropy(&[20.0f64, 0.0, 0.0, 0.0], 0).unwrap();
        assert!(l < 1e-6 && l >= 0.0);
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let t = rng.random_range(0..4);
            let z: f64 = logits.iter().map(|x| x.exp()).sum();
            let want = -(logits[t].exp() / z).ln();
            assert!((cross_entropy(&logits, t).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn cross_entropy_errors() {
        assert!(matches!(cross_entropy(&[0.0f64; 4], 4), Err(Error::TargetOutOfRange { .. })));
        assert!(matches!(cross_entropy(&[0.0, f64::NAN], 0), Err(Error::NonFinite(_))));
        assert!(cross_entropy(&[0.0f64], 0).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0f64, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0f64, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(mse(&[1.0f64], &[1.0, 2.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..17).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..17).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut s = 0.0;
        for i in 0..17 {
            s += (a[i] - b[i]).powi(2);
        }
        assert!((mse(&a, &b).unwrap() - s / 17.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_examples() {
        let c = cosine_similarity(&[1.0f64, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((c.value - 1.0).abs() < 1e-15 && !c.degenerate);
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap().value, 0.0);
        let z = cosine_similarity(&[0.0f64, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(z, Cosine { value: 0.0, degenerate: true });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dot: f64 = (0..9).map(|i| a[i] * b[i]).sum();
        let want = dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt());
        assert!((cosine_similarity(&a, &b).unwrap().value - want).abs() < 1e-10);
    }
}
