use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new() }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(t.trainable());
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Adds `scale * grad` into the accumulator of parameter `id`.
    pub fn accumulate(&mut self, id: usize, grad: &[T], scale: T) {
        let g = self.tensors[id].grad.get_or_insert_with(|| vec![T::zero(); grad.len()]);
        for (a, &b) in g.iter_mut().zip(grad) {
            *a += scale * b;
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Cosine,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_ratio: f64,
    pub schedule: LrSchedule,
    /// Optimizer steps the schedule spans.
    pub total_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_ratio: 0.05,
            schedule: LrSchedule::Cosine,
            total_steps: 1,
        }
    }
}

impl AdamConfig {
    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_ratio * self.total_steps as f64).ceil() as u64
    }

    /// Linear warmup from 0, then cosine decay to 0 at `total_steps`.
    pub fn lr_at(&self, step: u64) -> f64 {
        let warm = self.warmup_steps();
        if step < warm {
            return self.learning_rate * step as f64 / warm as f64;
        }
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let span = self.total_steps.saturating_sub(warm).max(1) as f64;
                let progress = ((step - warm) as f64 / span).min(1.0);
                self.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

/// Adam moments plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || params.tensors.iter().map(|t| vec![T::zero(); t.numel()]).collect();
        OptimizerState { config, step: 0, first_moment: zeros(), second_moment: zeros() }
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr_at(self.step)
    }
}

/// One bias-corrected Adam update using the gradients stored on `params`.
pub fn adam_step<T: Scalar>(params: &mut ParamStore<T>, state: &mut OptimizerState<T>) -> Result<()> {
    if state.first_moment.len() != params.len() {
        return Err(Error::Shape("optimizer state does not match parameter set".into()));
    }
    for (i, t) in params.tensors.iter().enumerate() {
        if state.first_moment[i].len() != t.numel() {
            return Err(Error::Shape(format!("moment shape mismatch for {}", params.names[i])));
        }
        if let Some(g) = &t.grad {
            if !g.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}", params.names[i])));
            }
        }
    }
    let cfg = &state.config;
    let lr = cfg.lr_at(state.step);
    let t_next = (state.step + 1) as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t_next);
    let bc2 = 1.0 - cfg.beta2.powi(t_next);
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let step_size = T::lit(lr / bc1);
    let inv_bc2 = T::lit(1.0 / bc2);
    let eps = T::lit(cfg.eps);
    for (i, t) in params.tensors.iter_mut().enumerate() {
        let Some(g) = &t.grad else { continue };
        let (m, v) = (&mut state.first_moment[i], &mut state.second_moment[i]);
        for j in 0..t.data.len() {
            m[j] = b1 * m[j] + one_b1 * g[j];
            v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
            t.data[j] -= step_size * m[j] / ((v[j] * inv_bc2).sqrt() + eps);
        }
    }
    state.step += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> ParamStore<f64> {
        let mut p = ParamStore::default();
        p.push("w", Tensor::new(vec![1], vec![v]).unwrap());
        p
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = ParamStore::<f64>::default();
        p.push("a", Tensor::from_fn(&[3, 2], |i| i as f64 * 0.3 - 0.5));
        let before = p.clone();
        let mut st = OptimizerState::new(AdamConfig { total_steps: 10, warmup_ratio: 0.0, ..Default::default() }, &p);
        for _ in 0..3 {
            adam_step(&mut p, &mut st).unwrap();
        }
        assert_eq!(p.tensors[0].data, before.tensors[0].data);
    }

    #[test]
    fn single_step_matches_closed_form() {
        let mut p = one_param(0.5);
        p.tensors[0].grad = Some(vec![1.0]);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            warmup_ratio: 0.0,
            schedule: LrSchedule::Constant,
            total_steps: 100,
            ..Default::default()
        };
        let mut st = OptimizerState::new(cfg, &p);
        adam_step(&mut p, &mut st).unwrap();
        // m = 0.1, v = 0.001; bias-corrected both equal 1.
        let m_hat = (0.1 * 1.0) / (1.0 - 0.9);
        let v_hat = (0.001 * 1.0) / (1.0 - 0.999);
        let want = 0.5 - 0.1 * m_hat / (f64::sqrt(v_hat) + 1e-8);
        assert!((p.tensors[0].data[0] - want).abs() < 1e-12);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn warmup_starts_at_zero_then_decays() {
        let cfg = AdamConfig { learning_rate: 1e-3, total_steps: 100, ..Default::default() };
        assert_eq!(cfg.warmup_steps(), 5);
        assert_eq!(cfg.lr_at(0), 0.0);
        assert!((cfg.lr_at(5) - 1e-3).abs() < 1e-15);
        assert!(cfg.lr_at(50) < 1e-3 && cfg.lr_at(50) > 0.0);
        assert!(cfg.lr_at(100).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = one_param(1.0);
        p.tensors[0].grad = Some(vec![f64::NAN]);
        let mut st = OptimizerState::new(AdamConfig::default(), &p);
        let err = adam_step(&mut p, &mut st).unwrap_err().to_string();
        assert!(err.contains('w'), "{err}");
    }
}
