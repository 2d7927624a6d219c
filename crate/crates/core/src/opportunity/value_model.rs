//! Per-category conversion value model.
//!
//! The value of an opportunity for an advertiser of category `c` at step `t`
//! is `pCTR_c · pCVR_c · curve_c(t)` times a mean-one log-normal factor made
//! of a user term shared by every advertiser on the opportunity and an
//! advertiser-specific term.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::NUM_CATEGORIES;
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueModelConfig {
    pub ctr_range: (f64, f64),
    pub cvr_range: (f64, f64),
    /// Log-scale spread of the per-opportunity user factor.
    pub user_sigma: f64,
    /// Log-scale spread of the per-advertiser factor.
    pub advertiser_sigma: f64,
    /// `pValueSigma = noise_scale · pValue`.
    pub noise_scale: f64,
    /// Largest relative amplitude of the first time harmonic.
    pub curve_amplitude: f64,
}

impl Default for ValueModelConfig {
    fn default() -> Self {
        Self {
            ctr_range: (0.01, 0.05),
            cvr_range: (0.05, 0.25),
            user_sigma: 0.3,
            advertiser_sigma: 0.4,
            noise_scale: 0.1,
            curve_amplitude: 0.45,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueModel {
    pub base_ctr: Vec<f64>,
    pub base_cvr: Vec<f64>,
    /// `curves[category][step]`, multiplicative, all positive.
    pub curves: Vec<Vec<f64>>,
    pub user_sigma: f64,
    pub advertiser_sigma: f64,
    pub noise_scale: f64,
}

impl ValueModel {
    /// Draws base rates and a 2–3 harmonic time curve per category.
    pub fn seeded(seed: u64, num_steps: usize, config: &ValueModelConfig) -> Self {
        let mut rng = stream_rng(seed, Stream::ValueModel, 0);
        let mut base_ctr = Vec::with_capacity(NUM_CATEGORIES);
        let mut base_cvr = Vec::with_capacity(NUM_CATEGORIES);
        let mut curves = Vec::with_capacity(NUM_CATEGORIES);
        for _ in 0..NUM_CATEGORIES {
            base_ctr.push(rng.random_range(config.ctr_range.0..=config.ctr_range.1));
            base_cvr.push(rng.random_range(config.cvr_range.0..=config.cvr_range.1));
            let harmonics: usize = rng.random_range(2..=3);
            let terms: Vec<(f64, f64, f64)> = (1..=harmonics)
                .map(|h| {
                    let amp = rng.random_range(0.0..=config.curve_amplitude) / h as f64;
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    (h as f64, amp, phase)
                })
                .collect();
            let curve = (0..num_steps)
                .map(|t| {
                    let x = std::f64::consts::TAU * t as f64 / num_steps as f64;
                    1.0 + terms.iter().map(|&(h, a, p)| a * (h * x + p).sin()).sum::<f64>()
                })
                .collect();
            curves.push(curve);
        }
        Self {
            base_ctr,
            base_cvr,
            curves,
            user_sigma: config.user_sigma,
            advertiser_sigma: config.advertiser_sigma,
            noise_scale: config.noise_scale,
        }
    }

    pub fn num_steps(&self) -> usize {
        self.curves.first().map_or(0, Vec::len)
    }

    /// Mean value for a category at a step (before clamping to [0, 1]).
    pub fn expected_value(&self, category: usize, step: usize) -> f64 {
        self.base_ctr[category] * self.base_cvr[category] * self.curves[category][step]
    }

    /// Combines the mean with standard-normal user and advertiser draws.
    pub fn value(&self, category: usize, step: usize, user_z: f64, own_z: f64) -> f64 {
        let s2 = self.user_sigma * self.user_sigma + self.advertiser_sigma * self.advertiser_sigma;
        let factor = (self.user_sigma * user_z + self.advertiser_sigma * own_z - 0.5 * s2).exp();
        (self.expected_value(category, step) * factor).clamp(0.0, 1.0)
    }

    pub fn sigma(&self, value: f64) -> f64 {
        self.noise_scale * value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_are_positive_and_distinct() {
        let m = ValueModel::seeded(3, 48, &ValueModelConfig::default());
        assert_eq!(m.curves.len(), NUM_CATEGORIES);
        assert!(m.curves.iter().flatten().all(|&x| x > 0.0));
        assert_ne!(m.curves[1], m.curves[2]);
        for c in 0..NUM_CATEGORIES {
            let v = m.expected_value(c, 0);
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn zero_draws_reduce_to_mean_shift() {
        let m = ValueModel::seeded(3, 48, &ValueModelConfig::default());
        let s2: f64 = 0.3f64.powi(2) + 0.4f64.powi(2);
        let expected = m.expected_value(5, 10) * (-0.5 * s2).exp();
        assert!((m.value(5, 10, 0.0, 0.0) - expected).abs() < 1e-15);
    }
}
