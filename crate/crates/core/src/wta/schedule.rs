//! Progress-gated annealing of the sparsity target and noise level.

use super::TrainConfig;

/// Sparsity fraction used while σ is zero.
pub const ALPHA_START: f64 = 0.5;
/// Noise standard deviation while σ is zero.
pub const BETA_START: f64 = 0.2;
const ALPHA_RATE: f64 = 10.0;
const BETA_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState {
    pub sigma: f64,
    pub alpha_t: f64,
    pub beta_t: f64,
}

impl ScheduleState {
    pub fn initial(alpha: f64) -> Self {
        Self::at_sigma(0.0, alpha)
    }

    /// `alpha_t = 0.5 w + alpha (1 - w)` with `w = exp(-10 sigma)`, and
    /// `beta_t = 0.2 exp(-0.01 sigma)`.
    pub fn at_sigma(sigma: f64, alpha: f64) -> Self {
        let w = (-ALPHA_RATE * sigma).exp();
        Self {
            sigma,
            alpha_t: ALPHA_START * w + alpha * (1.0 - w),
            beta_t: BETA_START * (-BETA_RATE * sigma).exp(),
        }
    }
}

/// Advances σ by one step only when the epoch's mean error beat the gate.
pub fn schedule_update(
    state: ScheduleState,
    epoch_mean_error: f64,
    cfg: &TrainConfig,
) -> ScheduleState {
    let sigma = if epoch_mean_error < cfg.error_threshold {
        state.sigma + cfg.sigma_step
    } else {
        state.sigma
    };
    ScheduleState::at_sigma(sigma, cfg.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64) -> TrainConfig {
        TrainConfig {
            alpha,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn starts_easy() {
        let s = ScheduleState::initial(0.0675);
        assert_eq!(s.alpha_t, 0.5);
        assert_eq!(s.beta_t, 0.2);
    }

    #[test]
    fn gate_on_error() {
        let c = cfg(0.0675);
        let s = ScheduleState::initial(c.alpha);
        assert_eq!(schedule_update(s, 0.02, &c).sigma, 0.0);
        assert_eq!(schedule_update(s, 0.01, &c).sigma, 0.0);
        assert!((schedule_update(s, 0.009, &c).sigma - 0.01).abs() < 1e-15);
    }

    #[test]
    fn formula_at_sigma_046() {
        let alpha = 0.0675;
        let s = ScheduleState::at_sigma(0.46, alpha);
        let w = (-4.6f64).exp();
        assert!((w - 0.0101).abs() < 1e-4);
        assert!((s.alpha_t - (alpha + w * (0.5 - alpha))).abs() < 1e-15);
        assert!((s.beta_t - 0.2 * (-0.0046f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_sigma() {
        let alpha = 0.015;
        let mut prev = ScheduleState::initial(alpha);
        let c = cfg(alpha);
        for _ in 0..2000 {
            let next = schedule_update(prev, 0.0, &c);
            assert!(next.sigma >= prev.sigma);
            assert!(next.alpha_t <= prev.alpha_t);
            assert!(next.beta_t <= prev.beta_t);
            assert!(next.alpha_t >= alpha && next.alpha_t <= 0.5);
            assert!(next.beta_t > 0.0 && next.beta_t <= 0.2);
            prev = next;
        }
        assert!((prev.alpha_t - alpha).abs() < 1e-12);
    }
}
