//! Adam with bias correction, state kept per named parameter.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::nets::Params;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment per parameter plus the shared step counter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub step: u64,
    pub moments: BTreeMap<String, (Tensor<f32>, Tensor<f32>)>,
}

#[derive(Debug)]
pub enum AdamError {
    NonFiniteGradient { param: String },
    ShapeMismatch { param: String },
}

impl std::fmt::Display for AdamError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NonFiniteGradient { param } => {
                write!(f, "non-finite gradient for `{param}`; iteration aborted")
            }
            Self::ShapeMismatch { param } => write!(f, "gradient shape mismatch for `{param}`"),
        }
    }
}

impl std::error::Error for AdamError {}

/// One bias-corrected update over every `(name, grad)` pair. Parameters
/// without a gradient entry stay untouched; a non-finite gradient aborts the
/// whole step before any parameter changes.
pub fn adam_step(
    params: &mut Params,
    grads: &BTreeMap<String, Tensor<f32>>,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), AdamError> {
    for (name, g) in grads {
        if !g.all_finite() {
            return Err(AdamError::NonFiniteGradient {
                param: name.clone(),
            });
        }
        if let Ok(p) = params.get(name) {
            if p.shape() != g.shape() {
                return Err(AdamError::ShapeMismatch {
                    param: name.clone(),
                });
            }
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    let (lr, eps) = (cfg.lr as f32, cfg.eps as f32);
    let (bc1, bc2) = (bc1 as f32, bc2 as f32);

    for (name, g) in grads {
        let Ok(p) = params.get(name) else { continue };
        let p = p.clone();
        let (m_prev, v_prev) = state
            .moments
            .entry(name.clone())
            .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
        let gd = g.data();
        let mut m = m_prev.data().to_vec();
        let mut v = v_prev.data().to_vec();
        let mut new_p = p.data().to_vec();
        for i in 0..gd.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * gd[i];
            v[i] = b2 * v[i] + (1.0 - b2) * gd[i] * gd[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            new_p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        *m_prev = Tensor::new(g.shape().to_vec(), m).expect("moment shape");
        *v_prev = Tensor::new(g.shape().to_vec(), v).expect("moment shape");
        params.set(name, Tensor::new(g.shape().to_vec(), new_p).expect("param shape"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_magnitude_is_lr() {
        let mut params = Params::new();
        params.set("w", Tensor::scalar(1.0f32));
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::scalar(1.0f32));
        let mut state = AdamState::default();
        let cfg = AdamConfig::default();
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        // m_hat = v_hat = 1 on the first step, so the update is lr/(1+eps)
        let delta = params.get("w").unwrap().item() - 1.0;
        assert!((delta + 1e-4).abs() < 1e-7, "delta {delta}");
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = Params::new();
        params.set("w", Tensor::new(vec![3], vec![0.5f32, -0.25, 2.0]).unwrap());
        let before = params.get("w").unwrap().clone();
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::zeros(&[3]));
        let mut state = AdamState::default();
        for _ in 0..5 {
            adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
        }
        assert!(params.get("w").unwrap().bit_eq(&before));
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut params = Params::new();
            params.set("w", Tensor::new(vec![2], vec![1.0f32, -1.0]).unwrap());
            let mut state = AdamState::default();
            for k in 0..20 {
                let mut grads = BTreeMap::new();
                grads.insert(
                    "w".to_string(),
                    Tensor::new(vec![2], vec![(k as f32 * 0.37).sin(), 0.2]).unwrap(),
                );
                adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
            }
            params.get("w").unwrap().clone()
        };
        assert!(run().bit_eq(&run()));
    }

    #[test]
    fn non_finite_gradient_aborts_before_mutation() {
        let mut params = Params::new();
        params.set("a", Tensor::scalar(1.0f32));
        params.set("b", Tensor::scalar(2.0f32));
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), Tensor::scalar(1.0f32));
        grads.insert("b".to_string(), Tensor::scalar(f32::NAN));
        let mut state = AdamState::default();
        let err = adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, AdamError::NonFiniteGradient { .. }));
        assert_eq!(params.get("a").unwrap().item(), 1.0);
        assert_eq!(state.step, 0);
    }
}
