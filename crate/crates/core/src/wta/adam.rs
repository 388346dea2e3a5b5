//! Adam with bias-corrected moments.

use super::model::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Updates one flat tensor in place. `step` counts from 1.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: usize,
    cfg: &AdamConfig,
) {
    assert!(step >= 1, "adam steps count from 1");
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.step_size * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Moment buffers for every learnable tensor of the model.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: ParamSet,
    v: ParamSet,
}

impl Adam {
    pub fn new(cfg: AdamConfig, like: &ParamSet) -> Self {
        Self {
            cfg,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, step: usize) {
        let cfg = self.cfg;
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            adam_update(p, g, m, v, step, &cfg);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.5];
        let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
        adam_update(&mut p, &[0.0; 3], &mut m, &mut v, 1, &AdamConfig::default());
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn unit_gradient_first_step() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        adam_update(&mut p, &[1.0], &mut m, &mut v, 1, &cfg);
        // bias-corrected moments are exactly 1, so the step is lr / (1 + eps)
        assert!((p[0] + cfg.step_size / (1.0 + cfg.epsilon)).abs() < 1e-15);
    }
}
