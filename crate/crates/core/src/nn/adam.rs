//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    /// lr 1e-4 and weight decay 5e-4, the values the fusion training uses.
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: one pair of moment buffers per parameter tensor, in the
/// order the tensors are passed to [`Adam::step`].
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every tensor from its gradient slot. Each parameter is
    /// first shrunk by `1 − lr·weight_decay`, then moved by the bias-corrected
    /// Adam direction.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if self.first.is_empty() && self.step == 0 {
            self.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.second = self.first.clone();
        }
        if params.len() != self.first.len() {
            return Err(Error::shape("adam parameter list", &[self.first.len()], &[params.len()]));
        }
        for (i, p) in params.iter().enumerate() {
            if p.numel() != self.first[i].len() {
                return Err(Error::shape(
                    format!("adam moments of parameter {i}"),
                    &[self.first[i].len()],
                    &[p.numel()],
                ));
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let shrink = 1.0 - c.lr * c.weight_decay;
        for (i, p) in params.iter_mut().enumerate() {
            let (values, grads) = p.data_and_grad_mut();
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for j in 0..values.len() {
                let g = grads[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                values[j] = values[j] * shrink - c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(values: &[f64], grads: &[f64]) -> Tensor {
        let mut t = Tensor::scalar_vec(values);
        t.grad_mut().copy_from_slice(grads);
        t
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = param(&[1.0, -2.0], &[0.0, 0.0]);
        let mut adam = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig {
            lr: 0.01,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut p = param(&[0.0, 0.0, 0.0], &[3.0, -0.2, 1e-3]);
        Adam::new(cfg).step(&mut [&mut p]).unwrap();
        for (&v, s) in p.data().iter().zip([-1.0, 1.0, -1.0]) {
            // eps/|g| is 1e-5 for the smallest gradient
            assert!((v - s * 0.01).abs() < 1e-6, "got {v}");
        }
    }

    #[test]
    fn quadratic_descent_shrinks_magnitude() {
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg);
        let mut x = param(&[1.0], &[0.0]);
        let mut prev = 1.0f64;
        for _ in 0..3 {
            let g = 2.0 * x.data()[0];
            x.grad_mut()[0] = g;
            adam.step(&mut [&mut x]).unwrap();
            let now = x.data()[0].abs();
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn weight_decay_shrinks_before_update() {
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamConfig::default()
        };
        let mut p = param(&[2.0], &[0.0]);
        Adam::new(cfg).step(&mut [&mut p]).unwrap();
        assert!((p.data()[0] - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn shape_change_is_rejected() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = param(&[1.0], &[1.0]);
        adam.step(&mut [&mut p]).unwrap();
        let mut q = param(&[1.0, 2.0], &[1.0, 1.0]);
        assert!(adam.step(&mut [&mut q]).is_err());
        assert!(adam.step(&mut [&mut p, &mut q]).is_err());
    }
}
