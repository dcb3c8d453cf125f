//! Adam with decoupled weight decay and a step learning-rate schedule.

use serde::{Deserialize, Serialize};

/// Moment hyperparameters. The paper does not state them; these are the
/// standard defaults and are configurable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update, in place.
///
/// Weight decay is decoupled: `p ← p − lr·wd·p − lr·m̂/(√v̂ + ε)`, so a decay
/// factor of 0 reproduces plain Adam exactly.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
    hp: &AdamParams,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * weight_decay * params[i];
        params[i] -= lr * m_hat / (v_hat.sqrt() + hp.epsilon);
    }
}

/// Step schedule: `base · decay^⌊epoch / every⌋` (epoch is 0-based).
pub fn scheduled_lr(base: f64, decay: f64, every: usize, epoch: usize) -> f64 {
    base * decay.powi((epoch / every.max(1)) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signlike() {
        // after one step m̂ = g, v̂ = g², so the update is -lr·g/(|g| + ε)
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![10.0, -0.3, 2e-9];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &g, &mut st, 1e-2, 0.0, &AdamParams::default());
        let expected = [
            1.0 - 1e-2 * 10.0 / (10.0 + 1e-8),
            -2.0 + 1e-2 * 0.3 / (0.3 + 1e-8),
            0.5 - 1e-2 * 2e-9 / (2e-9 + 1e-8),
        ];
        for (a, b) in p.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_grads_zero_decay_leave_params_unchanged() {
        let mut p = vec![0.7, -0.1];
        let g = vec![0.0, 0.0];
        let mut st = AdamState::new(2);
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut st, 1e-3, 0.0, &AdamParams::default());
        }
        assert_eq!(p, vec![0.7, -0.1]);
    }

    #[test]
    fn zero_decay_reproduces_plain_adam() {
        let hp = AdamParams::default();
        let g = vec![0.5, -1.5];
        let mut p_wd = vec![1.0, 1.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p_wd, &g, &mut st, 1e-3, 0.0, &hp);

        // hand-rolled plain Adam, one step
        let mut p_ref = vec![1.0, 1.0];
        for i in 0..2 {
            let m_hat = g[i]; // m/(1-β1) with m = (1-β1)g
            let v_hat = g[i] * g[i];
            p_ref[i] -= 1e-3 * m_hat / (v_hat.sqrt() + hp.epsilon);
        }
        for (a, b) in p_wd.iter().zip(p_ref.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn schedule_decays_every_ten_epochs() {
        let lr = scheduled_lr(1e-4, 0.9, 10, 25);
        assert!((lr - 1e-4 * 0.81).abs() < 1e-18);
        assert_eq!(scheduled_lr(1e-4, 0.9, 10, 0), 1e-4);
        assert_eq!(scheduled_lr(1e-4, 0.9, 10, 9), 1e-4);
        assert!((scheduled_lr(1e-4, 0.9, 10, 10) - 9e-5).abs() < 1e-18);
    }
}
