use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaBeliefConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdaBeliefConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.99, epsilon: 1e-16 }
    }
}

impl AdaBeliefConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |b: f64| b.is_finite() && (0.0..1.0).contains(&b);
        if !ok(self.beta1) || !ok(self.beta2) {
            return Err(Error::invalid("betas must lie in [0, 1)"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::invalid("epsilon must be finite and >= 0"));
        }
        Ok(())
    }
}

/// AdaBelief state: first moment `m`, belief `s = EMA((g - m)²) + ε`, step `t`.
///
/// ```text
/// m ← β1·m + (1−β1)·g
/// s ← β2·s + (1−β2)·(g − m)² + ε
/// θ ← θ − lr · (m / (1−β1ᵗ)) / (√(s / (1−β2ᵗ)) + ε)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct AdaBelief<T> {
    pub config: AdaBeliefConfig,
    pub m: Vec<Tensor<T>>,
    pub s: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdaBelief<T> {
    pub fn new(params: &ParamStore<T>, config: AdaBeliefConfig) -> Self {
        let zeros = || params.iter().map(|(_, _, v)| Tensor::zeros(v.shape())).collect();
        Self { config, m: zeros(), s: zeros(), t: 0 }
    }

    /// One update. Gradients are checked before anything is modified, so a
    /// non-finite gradient leaves parameters and state untouched.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>], lr: f64) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::ShapeMismatch(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        for ((id, name, v), g) in params.iter().zip(grads) {
            if v.shape() != g.shape() || self.m[id.0].shape() != g.shape() {
                return Err(Error::ShapeMismatch(format!("gradient shape {:?} for {name} {:?}", g.shape(), v.shape())));
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(name.to_string()));
            }
        }
        self.t += 1;
        let c = &self.config;
        let (b1, b2, eps) = (T::lit(c.beta1), T::lit(c.beta2), T::lit(c.epsilon));
        let (one, lr) = (T::one(), T::lit(lr));
        let bc1 = one - T::lit(c.beta1.powi(self.t as i32));
        let bc2 = one - T::lit(c.beta2.powi(self.t as i32));
        let ids: Vec<_> = params.ids().collect();
        for (id, g) in ids.into_iter().zip(grads) {
            let theta = params.value_mut(id).data_mut();
            let m = self.m[id.0].data_mut();
            let s = self.s[id.0].data_mut();
            for i in 0..theta.len() {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                let d = gi - m[i];
                s[i] = b2 * s[i] + (one - b2) * d * d + eps;
                let m_hat = m[i] / bc1;
                let s_hat = s[i] / bc2;
                theta[i] -= lr * m_hat / (s_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
