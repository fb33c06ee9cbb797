use std::collections::BTreeMap;

use super::param::Parameter;
use super::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.002233,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub first: Tensor<T>,
    pub second: Tensor<T>,
}

/// Bias-corrected Adam. Moments are keyed by parameter name and created
/// lazily on the first step that sees a trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: BTreeMap<String, Moments<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// One update of every trainable parameter from its current gradient.
    /// Non-trainable parameters are left untouched.
    pub fn step(&mut self, params: &mut [&mut Parameter<T>]) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bias1 = T::lit(1.0 - c.beta1.powi(t));
        let bias2 = T::lit(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));

        for p in params.iter_mut().filter(|p| p.trainable) {
            let m = self.moments.entry(p.name().to_string()).or_insert_with(|| Moments {
                first: Tensor::zeros(p.value.shape()),
                second: Tensor::zeros(p.value.shape()),
            });
            let grads = p.grad.data();
            let values = p.value.data_mut();
            let first = m.first.data_mut();
            let second = m.second.data_mut();
            for i in 0..values.len() {
                let g = grads[i];
                first[i] = b1 * first[i] + (T::one() - b1) * g;
                second[i] = b2 * second[i] + (T::one() - b2) * g * g;
                let m_hat = first[i] / bias1;
                let v_hat = second[i] / bias2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
