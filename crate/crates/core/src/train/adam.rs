use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::ode::MlpParams;

/// Moment estimates for bias-corrected Adam over the flattened parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        AdamState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn for_params(params: &MlpParams) -> Self {
        AdamState::new(params.num_params())
    }

    /// In-place update of `params`.
    pub(crate) fn apply(&mut self, params: &mut MlpParams, grad: &MlpParams, cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let moments = self.m.iter_mut().zip(self.v.iter_mut());
        for ((p, g), (m, v)) in params.iter_mut().zip(grad.iter()).zip(moments) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// One bias-corrected Adam step; returns the new parameters and moments.
pub fn adam_step(
    params: &MlpParams,
    grad: &MlpParams,
    state: &AdamState,
    cfg: &TrainConfig,
) -> Result<(MlpParams, AdamState)> {
    if !params.same_shape(grad) || state.m.len() != params.num_params() || state.v.len() != params.num_params() {
        return Err(Error::shape("parameters, gradient and optimizer state disagree"));
    }
    let mut p = params.clone();
    let mut s = state.clone();
    s.apply(&mut p, grad, cfg);
    Ok((p, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar_net(value: f64) -> MlpParams {
        // smallest network; every coordinate gets the same value
        let mut p = MlpParams::zeros(&[1], 0);
        for x in p.iter_mut() {
            *x = value;
        }
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let p = MlpParams::init(&[4], 0, 1);
        let g = p.zeros_like();
        let (q, s) = adam_step(&p, &g, &AdamState::for_params(&p), &TrainConfig::default()).unwrap();
        assert_eq!(p, q);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_is_sign_normalized() {
        let p = scalar_net(0.0);
        let g = scalar_net(5.0);
        let cfg = TrainConfig::default();
        let (q, s) = adam_step(&p, &g, &AdamState::for_params(&p), &cfg).unwrap();
        // m_hat = g, v_hat = g^2, so delta = -lr * g / (|g| + eps)
        let expect = -0.01 * 5.0 / (5.0 + 1e-8);
        for x in q.iter() {
            assert!((x - expect).abs() < 1e-15);
        }
        assert!(s.v.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn zero_learning_rate_is_noop() {
        let p = MlpParams::init(&[4], 0, 2);
        let g = MlpParams::init(&[4], 0, 3);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        let (q, _) = adam_step(&p, &g, &AdamState::for_params(&p), &cfg).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn shape_mismatch() {
        let p = MlpParams::zeros(&[4], 0);
        let g = MlpParams::zeros(&[5], 0);
        assert!(adam_step(&p, &g, &AdamState::for_params(&p), &TrainConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn update_magnitude_bounded(grads in prop::collection::vec(-1e6f64..1e6, 1..20)) {
            let cfg = TrainConfig::default();
            let p = scalar_net(0.0);
            let mut params = p.clone();
            let mut state = AdamState::for_params(&p);
            for g in grads {
                let grad = scalar_net(g);
                let before = params.clone();
                state.apply(&mut params, &grad, &cfg);
                for (a, b) in params.iter().zip(before.iter()) {
                    prop_assert!((a - b).abs() <= 10.0 * cfg.learning_rate);
                }
                prop_assert!(state.v.iter().all(|v| *v >= 0.0));
            }
        }
    }
}
