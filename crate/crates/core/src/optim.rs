//! Adaptive-moment gradient descent.

use serde::{Deserialize, Serialize};

use crate::networks::{Gradients, Network};
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(net: &Network<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<T>> = net.params().iter().map(|p| vec![T::zero(); p.data.len()]).collect();
        Self { config, step: 0, first_moment: zeros.clone(), second_moment: zeros }
    }

    pub fn update(&mut self, net: &mut Network<T>, grads: &Gradients<T>, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2_sqrt = (1.0 - beta2.powi(t)).sqrt();
        let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let step_size = T::from_f64_lossy(lr / bias1);
        let inv_bias2 = T::from_f64_lossy(1.0 / bias2_sqrt);
        let eps = T::from_f64_lossy(eps);
        for (((param, g), m), v) in
            net.params_mut().iter_mut().zip(&grads.tensors).zip(&mut self.first_moment).zip(&mut self.second_moment)
        {
            for (((p, &g), m), v) in param.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + c1 * g;
                *v = b2 * *v + c2 * g * g;
                *p -= step_size * *m / (v.sqrt() * inv_bias2 + eps);
            }
        }
    }
}
