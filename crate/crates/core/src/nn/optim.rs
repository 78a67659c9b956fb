//! Adam with decoupled weight decay, and the proximal L1 step.

use super::ParamSet;
use crate::error::{Error, Result};
use ndarray::Array2;

/// Adam optimizer state bound to one [`ParamSet`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: usize,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64, weight_decay: f64) -> Self {
        let m = (0..params.len())
            .map(|i| Array2::zeros(params.shape(i)))
            .collect();
        let v = (0..params.len())
            .map(|i| Array2::zeros(params.shape(i)))
            .collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m,
            v,
        }
    }

    /// One update over every parameter; gradients are ordered like the set.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Array2<f64>]) -> Result<()> {
        assert_eq!(grads.len(), params.len(), "gradient count");
        for (i, g) in grads.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(params.names()[i].clone()));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let mut p = params.value(i);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((pe, ge), (me, ve)) in p
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *me = self.beta1 * *me + (1.0 - self.beta1) * ge;
                *ve = self.beta2 * *ve + (1.0 - self.beta2) * ge * ge;
                let mhat = *me / bc1;
                let vhat = *ve / bc2;
                if self.weight_decay > 0.0 {
                    *pe *= 1.0 - self.lr * self.weight_decay;
                }
                *pe -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            params.set(i, &p);
        }
        Ok(())
    }
}

/// Soft thresholding after a gradient step:
/// `w_i <- sign(w_i) * max(|w_i| - step * lambda1, 0)`.
pub fn proximal_l1_step(w: &mut Array2<f64>, step: f64, lambda1: f64) {
    assert!(step > 0.0, "proximal step must be positive");
    assert!(lambda1 >= 0.0, "lambda1 must be nonnegative");
    let threshold = step * lambda1;
    if threshold == 0.0 {
        return;
    }
    w.mapv_inplace(|v| v.signum() * (v.abs() - threshold).max(0.0));
}
