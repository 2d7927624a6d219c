//! Per-step opportunity volume over a delivery period.

use rand::Rng;

use crate::rng::{stream_rng, Stream};

/// How many opportunities arrive in each step.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeCurve {
    /// Expected (real-valued) volume per step.
    pub expected: Vec<f64>,
    /// Integer allocation of `expected`; sums exactly to the total.
    pub counts: Vec<u64>,
}

impl VolumeCurve {
    pub fn num_steps(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// A flat curve; used by controlled experiments.
    pub fn uniform(total: u64, num_steps: usize) -> Self {
        let shape = vec![1.0; num_steps];
        Self::from_shape(total, &shape)
    }

    /// Scales a non-negative shape to `total` and rounds with the
    /// largest-remainder rule.
    pub fn from_shape(total: u64, shape: &[f64]) -> Self {
        let mass: f64 = shape.iter().sum();
        assert!(mass > 0.0, "volume shape has no mass");
        let expected: Vec<f64> = shape.iter().map(|w| total as f64 * w / mass).collect();
        let mut counts: Vec<u64> = expected.iter().map(|e| e.floor() as u64).collect();
        let assigned: u64 = counts.iter().sum();
        let mut order: Vec<usize> = (0..shape.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = expected[a] - expected[a].floor();
            let rb = expected[b] - expected[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
            counts[i] += 1;
        }
        Self { expected, counts }
    }
}

fn bump(x: f64, center: f64, width: f64) -> f64 {
    (-0.5 * ((x - center) / width).powi(2)).exp()
}

/// Daily traffic shape with a morning and an evening peak and a night
/// trough, jittered per seed, scaled to `total`.
///
/// Panics when `total < num_steps`.
pub fn build_volume_curve(total: u64, num_steps: usize, seed: u64) -> VolumeCurve {
    assert!(num_steps > 0, "need at least one step");
    assert!(total >= num_steps as u64, "total volume {total} is below the step count {num_steps}");
    let mut rng = stream_rng(seed, Stream::Volume, 0);
    let morning = 10.0 + rng.random_range(-0.75..0.75);
    let evening = 20.5 + rng.random_range(-0.75..0.75);
    let shape: Vec<f64> = (0..num_steps)
        .map(|t| {
            let hour = 24.0 * (t as f64 + 0.5) / num_steps as f64;
            let base = 0.25 + bump(hour, morning, 2.2) + 0.85 * bump(hour, evening, 1.8);
            base * (1.0 + rng.random_range(-0.08..0.08))
        })
        .collect();
    VolumeCurve::from_shape(total, &shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conserves_total() {
        let c = build_volume_curve(48, 48, 3);
        assert_eq!(c.total(), 48);
        assert_eq!(c.num_steps(), 48);
        let c = build_volume_curve(500_000, 48, 9);
        let total = c.total() as i64;
        assert!((total - 500_000).abs() <= 48);
        assert!((c.expected.iter().sum::<f64>() - 500_000.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(build_volume_curve(5000, 48, 1), build_volume_curve(5000, 48, 1));
        assert_ne!(build_volume_curve(5000, 48, 1), build_volume_curve(5000, 48, 2));
    }

    #[test]
    fn has_day_and_night() {
        let c = build_volume_curve(100_000, 48, 5);
        let night = c.counts[4..8].iter().sum::<u64>();
        let morning = c.counts[19..23].iter().sum::<u64>();
        let evening = c.counts[39..43].iter().sum::<u64>();
        assert!(morning > 2 * night && evening > 2 * night);
    }

    #[test]
    #[should_panic(expected = "below the step count")]
    fn rejects_too_small_total() {
        build_volume_curve(10, 48, 0);
    }
}
