use crate::tensor::Tensor;

use super::TrainError;

/// Adam hyperparameters. `decay` is inverse-time learning-rate decay per
/// step: the update at step `t` uses `lr / (1 + decay * t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay: 5e-5,
        }
    }
}

impl AdamConfig {
    /// Effective learning rate of step `t` (1-based).
    pub fn lr_at(&self, t: u64) -> f64 {
        self.lr / (1.0 + self.decay * t as f64)
    }

    pub fn is_valid(&self) -> bool {
        self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.decay >= 0.0
            && [self.lr, self.epsilon, self.decay].iter().all(|v| v.is_finite())
    }
}

/// Moment estimates mirroring the parameter list, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn round_to_f32(&mut self) {
        self.m.iter_mut().chain(self.v.iter_mut()).for_each(Tensor::round_to_f32);
    }
}

/// One bias-corrected Adam update. Returns the learning rate that was
/// applied. On a non-finite gradient nothing is modified.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<f64, TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(TrainError::GradientMismatch(format!(
            "{} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].shape() != p.shape() {
            return Err(TrainError::GradientMismatch(format!(
                "tensor {i}: param {} vs grad {}",
                p.shape(),
                g.shape()
            )));
        }
        if !g.data().iter().all(|v| v.is_finite()) {
            return Err(TrainError::NonFiniteGradient { tensor: i });
        }
    }

    let c = state.config;
    state.t += 1;
    let t = state.t;
    let lr = c.lr_at(t);
    let bc1 = 1.0 - c.beta1.powf(t as f64);
    let bc2 = 1.0 - c.beta2.powf(t as f64);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, w) in p.data_mut().iter_mut().enumerate() {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + c.epsilon);
        }
    }
    Ok(lr)
}
