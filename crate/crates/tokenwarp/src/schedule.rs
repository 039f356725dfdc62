//! Diffusion noise schedule: per-step betas and their cumulative products.
//!
//! Schedule arithmetic runs in f64; only the per-element latent math is f32.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// How betas are interpolated between the endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSpacing {
    /// Interpolate beta linearly.
    Linear,
    /// Interpolate sqrt(beta) linearly, then square. The convention of
    /// latent-diffusion samplers.
    ScaledLinear,
}

/// Noise schedule over `T` timesteps: betas and cumulative alpha products.
///
/// Timesteps are 1-based: `alpha_bar(t)` is the product of `1 - beta_s` for
/// `s = 1..=t`, and `alpha_bar(0) == 1` is the clean terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    /// Build a schedule of `t_total` betas interpolated per `spacing`.
    pub fn make(t_total: usize, beta_start: f64, beta_end: f64, spacing: BetaSpacing) -> Result<Self> {
        if t_total == 0 {
            return Err(Error::invalid("schedule needs at least one timestep"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "beta range ({beta_start}, {beta_end}) must satisfy 0 < start <= end < 1"
            )));
        }
        let lerp = |a: f64, b: f64, i: usize| {
            if t_total == 1 {
                a
            } else {
                a + (b - a) * (i as f64) / ((t_total - 1) as f64)
            }
        };
        let beta: Vec<f64> = (0..t_total)
            .map(|i| match spacing {
                BetaSpacing::Linear => lerp(beta_start, beta_end, i),
                BetaSpacing::ScaledLinear => lerp(beta_start.sqrt(), beta_end.sqrt(), i).powi(2),
            })
            .collect();
        Ok(Self::from_betas(beta))
    }

    /// Identity schedule with all betas zero (no noise added at any step).
    pub fn zero_noise(t_total: usize) -> Result<Self> {
        if t_total == 0 {
            return Err(Error::invalid("schedule needs at least one timestep"));
        }
        Ok(Self::from_betas(vec![0.0; t_total]))
    }

    /// The default used throughout: T = 1000, scaled-linear betas in
    /// [0.00085, 0.012].
    pub fn default_latent() -> Self {
        Self::make(1000, 0.00085, 0.012, BetaSpacing::ScaledLinear).expect("valid defaults")
    }

    fn from_betas(beta: Vec<f64>) -> Self {
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut prod = 1.0f64;
        for &b in &beta {
            prod *= 1.0 - b;
            alpha_bar.push(prod);
        }
        Self { beta, alpha_bar }
    }

    /// Total number of timesteps `T`.
    pub fn t_total(&self) -> usize {
        self.beta.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    /// Cumulative product at 1-based timestep `t`; `t = 0` yields 1.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Ok(1.0);
        }
        self.alpha_bar
            .get(t - 1)
            .copied()
            .ok_or_else(|| Error::invalid(format!("timestep {t} beyond T = {}", self.beta.len())))
    }

    /// Uniformly strided sampling timesteps, largest first, ending at the
    /// smallest stride multiple; the step to t = 0 is taken by the caller.
    pub fn sample_timesteps(&self, steps: usize) -> Result<Vec<usize>> {
        let t_total = self.t_total();
        if steps == 0 || steps > t_total {
            return Err(Error::invalid(format!(
                "steps {steps} must be in 1..={t_total}"
            )));
        }
        let mut ts: Vec<usize> = (1..=steps).map(|k| k * t_total / steps).collect();
        ts.dedup();
        if ts.len() != steps || ts[0] == 0 {
            return Err(Error::invalid(format!(
                "steps {steps} do not spread uniformly over 1..={t_total}"
            )));
        }
        ts.reverse();
        Ok(ts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity() {
        let s = DiffusionSchedule::zero_noise(3).unwrap();
        for t in 0..=3 {
            assert_eq!(s.alpha_bar(t).unwrap(), 1.0);
        }
    }

    #[test]
    fn default_sampler_step_count() {
        let s = DiffusionSchedule::make(50, 1e-4, 0.02, BetaSpacing::Linear).unwrap();
        assert_eq!(s.t_total(), 50);
        assert_eq!(s.betas().len(), 50);
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(DiffusionSchedule::make(0, 1e-4, 0.02, BetaSpacing::Linear).is_err());
        assert!(DiffusionSchedule::make(10, 0.0, 0.02, BetaSpacing::Linear).is_err());
        assert!(DiffusionSchedule::make(10, 0.03, 0.02, BetaSpacing::Linear).is_err());
        assert!(DiffusionSchedule::make(10, 1e-4, 1.0, BetaSpacing::Linear).is_err());
    }

    // Independent oracle: rebuild the betas and take the log-sum route for
    // the cumulative product.
    #[test]
    fn alpha_bar_matches_log_sum_oracle() {
        let t_total = 1000;
        let s = DiffusionSchedule::make(t_total, 1e-4, 0.02, BetaSpacing::Linear).unwrap();
        let mut log_sum = 0.0f64;
        for i in 0..t_total {
            let beta = 1e-4 + (0.02 - 1e-4) * (i as f64) / ((t_total - 1) as f64);
            log_sum += (1.0 - beta).ln();
        }
        let oracle = log_sum.exp();
        let got = s.alpha_bar(t_total).unwrap();
        assert!(
            ((got - oracle) / oracle).abs() < 1e-10,
            "got {got}, oracle {oracle}"
        );
    }

    #[test]
    fn alpha_bar_is_running_product_and_monotone() {
        let s = DiffusionSchedule::default_latent();
        let mut prod = 1.0f64;
        let mut prev = 1.0f64;
        for t in 1..=s.t_total() {
            prod *= 1.0 - s.betas()[t - 1];
            let ab = s.alpha_bar(t).unwrap();
            assert!(((ab - prod) / prod).abs() < 1e-12);
            assert!(ab > 0.0 && ab <= 1.0);
            assert!(ab < prev, "alpha_bar must strictly decrease for positive betas");
            prev = ab;
        }
    }

    #[test]
    fn scaled_linear_squares_sqrt_interpolation() {
        let s = DiffusionSchedule::make(3, 0.01, 0.04, BetaSpacing::ScaledLinear).unwrap();
        // sqrt endpoints 0.1 and 0.2, midpoint 0.15 -> squared 0.0225.
        assert!((s.betas()[0] - 0.01).abs() < 1e-15);
        assert!((s.betas()[1] - 0.0225).abs() < 1e-15);
        assert!((s.betas()[2] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn sample_timesteps_uniform_stride() {
        let s = DiffusionSchedule::default_latent();
        let ts = s.sample_timesteps(50).unwrap();
        assert_eq!(ts.len(), 50);
        assert_eq!(ts[0], 1000);
        assert_eq!(ts[49], 20);
        assert!(ts.windows(2).all(|p| p[0] - p[1] == 20));
        assert!(s.sample_timesteps(0).is_err());
        assert!(s.sample_timesteps(1001).is_err());
    }
}
