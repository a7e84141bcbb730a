use serde::{Deserialize, Serialize};

use super::{GlpParams, PARAM_COUNT};
use crate::error::{GlpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, m: vec![0.0; PARAM_COUNT], v: vec![0.0; PARAM_COUNT], step: 0 }
    }
}

/// Bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut GlpParams, grads: &GlpParams, state: &mut AdamState) -> Result<()> {
    if state.m.len() != PARAM_COUNT || state.v.len() != PARAM_COUNT {
        return Err(GlpError::Shape { expected: PARAM_COUNT, got: state.m.len().min(state.v.len()) });
    }
    let AdamConfig { learning_rate, beta1, beta2, epsilon } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let g = grads.to_vec();
    let mut k = 0;
    let (m, v) = (&mut state.m, &mut state.v);
    params.visit_mut(&mut |p| {
        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
        let m_hat = m[k] / bc1;
        let v_hat = v[k] / bc2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        k += 1;
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = GlpParams::init(&mut rng_for(1, "p", 0));
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default());
        adam_step(&mut p, &GlpParams::zeros(), &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        // With a constant gradient the bias-corrected moments are exactly g
        // and g^2, so every step moves lr * g / (|g| + eps).
        let cfg = AdamConfig::default();
        let mut p = GlpParams::zeros();
        let mut g = GlpParams::zeros();
        g.visit_mut(&mut |x| *x = 0.3);
        g.regressor.output.b[0] = -2.0;
        let mut st = AdamState::new(cfg);
        for step in 1..=200 {
            let before = p.to_vec();
            adam_step(&mut p, &g, &mut st).unwrap();
            let after = p.to_vec();
            let d0 = before[0] - after[0];
            let dl = before[PARAM_COUNT - 1] - after[PARAM_COUNT - 1];
            assert!((d0 - cfg.learning_rate * 0.3 / (0.3 + cfg.epsilon)).abs() < 1e-12, "step {step}: {d0}");
            assert!((dl + cfg.learning_rate).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let p0 = GlpParams::init(&mut rng_for(2, "p", 0));
        let g = GlpParams::init(&mut rng_for(3, "g", 0));
        let (mut a, mut b) = (p0.clone(), p0);
        let (mut sa, mut sb) = (AdamState::new(AdamConfig::default()), AdamState::new(AdamConfig::default()));
        adam_step(&mut a, &g, &mut sa).unwrap();
        adam_step(&mut b, &g, &mut sb).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        sa.m.pop();
        assert!(matches!(adam_step(&mut a, &g, &mut sa), Err(GlpError::Shape { .. })));
    }
}
