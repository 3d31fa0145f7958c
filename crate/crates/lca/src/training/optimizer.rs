//! AdamW with decoupled weight decay, applied uniformly to every tensor.

use crate::encoder::{EncoderConfig, LcaEncoderParams};

#[derive(Debug, Clone, Copy)]
pub struct AdamWSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWSettings {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }
}

/// Optimizer state over a full parameter set.
pub struct AdamW {
    settings: AdamWSettings,
    step_count: u64,
    m: LcaEncoderParams,
    v: LcaEncoderParams,
}

impl AdamW {
    pub fn new(settings: AdamWSettings, config: EncoderConfig) -> Self {
        Self {
            settings,
            step_count: 0,
            m: LcaEncoderParams::zeros(config),
            v: LcaEncoderParams::zeros(config),
        }
    }

    pub fn step(&mut self, params: &mut LcaEncoderParams, grads: &LcaEncoderParams) {
        self.step_count += 1;
        let s = &self.settings;
        let bc1 = 1.0 - s.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - s.beta2.powi(self.step_count as i32);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            adamw_update(p, g, m, v, s, bc1, bc2);
        }
    }
}

/// Optimizer state over one flat vector (used for head-only training).
pub struct AdamWVec {
    settings: AdamWSettings,
    step_count: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamWVec {
    pub fn new(settings: AdamWSettings, len: usize) -> Self {
        Self { settings, step_count: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step_count += 1;
        let s = &self.settings;
        let bc1 = 1.0 - s.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - s.beta2.powi(self.step_count as i32);
        adamw_update(params, grads, &mut self.m, &mut self.v, s, bc1, bc2);
    }
}

fn adamw_update(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    s: &AdamWSettings,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..p.len() {
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= s.learning_rate * (m_hat / (v_hat.sqrt() + s.eps) + s.weight_decay * p[i]);
    }
}
