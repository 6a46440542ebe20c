//! Adam with global-norm gradient clipping.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients with a larger global norm are rescaled to this norm.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

pub fn global_norm(g: &[f64]) -> f64 {
    libm::sqrt(g.iter().map(|v| v * v).sum())
}

/// One bias-corrected Adam update in place. Returns the gradient norm
/// before clipping.
pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<f64> {
    if grad.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(Error::Shape(alloc::format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grad.len(),
            state.m.len()
        )));
    }
    let norm = global_norm(grad);
    if !norm.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    let scale = match cfg.clip_norm {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for i in 0..params.len() {
        let g = grad[i] * scale;
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.3, -1.2];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![0.3, -1.2]);
    }

    #[test]
    fn descends_on_a_parabola() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        for _ in 0..5 {
            let g = [2.0 * p[0]];
            let before = p[0];
            adam_step(&mut p, &g, &mut s, 0.1, &AdamConfig::default()).unwrap();
            assert!(p[0] < before);
        }
    }

    #[test]
    fn deterministic_and_clipped() {
        let run = || {
            let mut p = vec![0.5, 0.5, 0.5];
            let mut s = AdamState::new(3);
            let n = adam_step(
                &mut p,
                &[30.0, -40.0, 0.0],
                &mut s,
                0.01,
                &AdamConfig::default(),
            )
            .unwrap();
            (p, s, n)
        };
        let (a, sa, n) = run();
        let (b, sb, _) = run();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert_eq!(n, 50.0);
        assert!((sa.m[0] - 0.1 * 0.6).abs() < 1e-15);
    }

    #[test]
    fn rejects_mismatch_and_nan() {
        let mut p = vec![0.0; 2];
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut p, &[1.0], &mut s, 0.1, &AdamConfig::default()).is_err());
        assert!(adam_step(
            &mut p,
            &[f64::NAN, 0.0],
            &mut s,
            0.1,
            &AdamConfig::default()
        )
        .is_err());
    }
}
