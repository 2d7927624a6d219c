//! Online LP bidding: a greedy fractional-knapsack threshold per step.
//!
//! Each step the agent prices its opportunities with a cost estimate taken
//! from recent least winning costs in the same value band, allots itself
//! this step's share of the remaining budget, and finds the density
//! threshold `ρ*` at which the greedy fill exhausts that allotment. It then
//! bids `v / ρ*`. Until enough history exists it bids the bootstrap
//! coefficient, capped so the step's bids fit its budget share.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{AgentError, BidDecision, BidRequest, BiddingStrategy, StepFeedback};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineLpParams {
    /// Coefficient used until enough history has accumulated.
    pub alpha0: f64,
    /// Most recent `(value, least winning cost)` samples kept.
    pub window: usize,
    pub value_bands: usize,
    /// Samples required before leaving the bootstrap coefficient.
    pub min_samples: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for OnlineLpParams {
    fn default() -> Self {
        Self {
            alpha0: 100.0,
            window: 20_000,
            value_bands: 5,
            min_samples: 20,
            alpha_min: 0.01,
            alpha_max: 10_000.0,
        }
    }
}

impl OnlineLpParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err("alpha0 must be positive".into());
        }
        if self.window == 0 || self.value_bands == 0 {
            return Err("window and value_bands must be positive".into());
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= self.alpha_max && self.alpha_max.is_finite()) {
            return Err("need 0 < alpha_min <= alpha_max < inf".into());
        }
        Ok(())
    }
}

/// Greedy threshold density for a fractional knapsack.
///
/// `pairs` are `(value, cost)`. Items are taken in descending `value / cost`
/// order; the result is the density of the first item at which cumulative
/// cost reaches `budget`, or the lowest density when the budget is never
/// reached. `None` for an empty pool.
pub fn greedy_threshold(pairs: &[(f64, f64)], budget: f64) -> Option<f64> {
    let mut items: Vec<(f64, f64)> = pairs.iter().map(|&(v, c)| (v / c, c)).collect();
    items.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("densities are never NaN"));
    let mut cumulative = 0.0;
    for &(density, cost) in &items {
        cumulative += cost;
        if cumulative >= budget {
            return Some(density);
        }
    }
    items.last().map(|&(d, _)| d)
}

#[derive(Clone, Debug)]
pub struct OnlineLp {
    params: OnlineLpParams,
    samples: VecDeque<(f64, f64)>,
    step_counts: Vec<usize>,
    won_cost: f64,
    won_lwc: f64,
    won_count: usize,
    alpha: Option<f64>,
}

const MIN_COST: f64 = 1e-9;
const MIN_WINS_FOR_RATIO: usize = 20;

impl OnlineLp {
    pub fn new(params: OnlineLpParams) -> Self {
        Self {
            params,
            samples: VecDeque::new(),
            step_counts: Vec::new(),
            won_cost: 0.0,
            won_lwc: 0.0,
            won_count: 0,
            alpha: None,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    /// Ratio of charged cost to least winning cost on opportunities the
    /// agent bid through; 1 until enough wins are seen.
    pub fn spend_ratio(&self) -> f64 {
        if self.won_count < MIN_WINS_FOR_RATIO || !(self.won_lwc > 0.0) {
            1.0
        } else {
            self.won_cost / self.won_lwc
        }
    }

    /// Per-band mean least winning cost, with band edges at value quantiles.
    fn band_costs(&self) -> (Vec<f64>, Vec<f64>) {
        let bands = self.params.value_bands;
        let mut values: Vec<f64> = self.samples.iter().map(|s| s.0).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = values.len();
        let edges: Vec<f64> = (1..bands).map(|k| values[k * n / bands]).collect();
        let mut sums = vec![0.0; bands];
        let mut counts = vec![0usize; bands];
        for &(v, c) in &self.samples {
            let b = edges.partition_point(|&e| e <= v);
            sums[b] += c;
            counts[b] += 1;
        }
        let overall = sums.iter().sum::<f64>() / n as f64;
        let means = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &k)| if k > 0 { s / k as f64 } else { overall })
            .collect();
        (edges, means)
    }

    /// `alpha0`, lowered so that the step's bids sum to at most its budget
    /// share. No winner pays more than its bid, so the bootstrap step cannot
    /// overspend whatever the market looks like.
    fn bootstrap_alpha(&self, request: &BidRequest<'_>) -> f64 {
        let total: f64 = request.values.iter().filter(|&&v| v > 0.0).sum();
        if total > 0.0 {
            self.params.alpha0.min(self.step_budget(request) / total)
        } else {
            self.params.alpha0
        }
    }

    fn step_budget(&self, request: &BidRequest<'_>) -> f64 {
        let m = request.values.len() as f64;
        let future_steps = (request.num_steps - request.step_index - 1) as f64;
        let mean_count = if self.step_counts.is_empty() {
            m
        } else {
            self.step_counts.iter().sum::<usize>() as f64 / self.step_counts.len() as f64
        };
        let share = if m + future_steps * mean_count > 0.0 { m / (m + future_steps * mean_count) } else { 1.0 };
        request.remaining_budget * share
    }
}

impl BiddingStrategy for OnlineLp {
    fn label(&self) -> &str {
        "OnlineLP"
    }

    fn decide(&mut self, request: &BidRequest<'_>) -> Result<BidDecision, AgentError> {
        if !(request.remaining_budget > 0.0) {
            return Ok(BidDecision::Alpha(0.0));
        }
        if self.samples.len() < self.params.min_samples.max(self.params.value_bands) {
            let alpha = self.bootstrap_alpha(request);
            self.alpha = Some(alpha);
            return Ok(BidDecision::Alpha(alpha));
        }
        let (edges, means) = self.band_costs();
        let kappa = self.spend_ratio();
        let pairs: Vec<(f64, f64)> = request
            .values
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| {
                let c = means[edges.partition_point(|&e| e <= v)];
                (v, (kappa * c).max(MIN_COST))
            })
            .collect();
        let alpha = match greedy_threshold(&pairs, self.step_budget(request)) {
            Some(rho) if rho > 0.0 => (1.0 / rho).clamp(self.params.alpha_min, self.params.alpha_max),
            _ => self.alpha.unwrap_or(self.params.alpha0),
        };
        self.alpha = Some(alpha);
        Ok(BidDecision::Alpha(alpha))
    }

    fn observe(&mut self, feedback: &StepFeedback<'_>) {
        self.step_counts.push(feedback.values.len());
        for j in 0..feedback.values.len() {
            let (v, lwc, bid) = (feedback.values[j], feedback.least_winning_costs[j], feedback.bids[j]);
            if v > 0.0 {
                self.samples.push_back((v, lwc));
            }
            if bid > 0.0 && bid >= lwc && lwc > 0.0 {
                self.won_cost += feedback.costs[j];
                self.won_lwc += lwc;
                self.won_count += 1;
            }
        }
        while self.samples.len() > self.params.window {
            self.samples.pop_front();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Highest density whose at-least-as-dense set costs at least `budget`;
    /// the lowest density when no such set exists.
    fn threshold_oracle(pairs: &[(f64, f64)], budget: f64) -> f64 {
        let densities: Vec<f64> = pairs.iter().map(|&(v, c)| v / c).collect();
        let mut best: Option<f64> = None;
        for &d in &densities {
            let cost: f64 = pairs.iter().zip(&densities).filter(|(_, &e)| e >= d).map(|(p, _)| p.1).sum();
            if cost >= budget && best.is_none_or(|b| d > b) {
                best = Some(d);
            }
        }
        best.unwrap_or_else(|| densities.iter().cloned().fold(f64::INFINITY, f64::min))
    }

    #[test]
    fn single_item() {
        assert_eq!(greedy_threshold(&[(1.0, 0.5)], 0.5), Some(2.0));
        assert_eq!(greedy_threshold(&[(1.0, 0.5)], 3.0), Some(2.0));
        assert_eq!(greedy_threshold(&[], 1.0), None);
    }

    #[test]
    fn equal_costs_half_budget_gives_median() {
        let c = 0.2;
        let values = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 1.0];
        let pairs: Vec<_> = values.iter().map(|&v| (v, c)).collect();
        let rho = greedy_threshold(&pairs, 5.0 * c).unwrap();
        // densities sorted: 5.0 4.5 4.0 3.5 3.0 | 2.5 ...
        assert!((rho - 3.0).abs() < 1e-12);
        let alpha = 1.0 / rho;
        let above: Vec<_> = values.iter().filter(|&&v| v / c > rho).collect();
        assert!(above.iter().all(|&&v| alpha * v > c));
    }

    proptest! {
        #[test]
        fn matches_oracle(
            pairs in prop::collection::vec((0.001f64..1.0, 0.01f64..2.0), 1..40),
            budget in 0.0f64..10.0,
        ) {
            let rho = greedy_threshold(&pairs, budget).unwrap();
            prop_assert_eq!(rho, threshold_oracle(&pairs, budget));
        }

        #[test]
        fn scaling_costs_and_budget_scales_alpha(
            pairs in prop::collection::vec((0.001f64..1.0, 0.01f64..2.0), 1..40),
            budget in 0.0f64..10.0,
        ) {
            let doubled: Vec<_> = pairs.iter().map(|&(v, c)| (v, 2.0 * c)).collect();
            let a = 1.0 / greedy_threshold(&pairs, budget).unwrap();
            let b = 1.0 / greedy_threshold(&doubled, 2.0 * budget).unwrap();
            prop_assert!((b - 2.0 * a).abs() <= 1e-9 * b);
        }

        #[test]
        fn alpha_non_increasing_in_budget(
            pairs in prop::collection::vec((0.001f64..1.0, 0.01f64..2.0), 1..40),
            b1 in 0.0f64..10.0,
            extra in 0.0f64..10.0,
        ) {
            let r1 = greedy_threshold(&pairs, b1).unwrap();
            let r2 = greedy_threshold(&pairs, b1 + extra).unwrap();
            prop_assert!(r2 <= r1);
        }
    }

    fn request<'a>(values: &'a [f64], remaining: f64) -> BidRequest<'a> {
        BidRequest {
            agent_index: 0,
            step_index: 10,
            num_steps: 48,
            budget: 100.0,
            remaining_budget: remaining,
            cpa_constraint: 30.0,
            values,
            sigmas: &[],
            history: &[],
        }
    }

    #[test]
    fn bootstrap_then_threshold() {
        let mut lp = OnlineLp::new(OnlineLpParams::default());
        let values: Vec<f64> = (1..=100).map(|k| k as f64 * 1e-4).collect();
        // Bootstrap: 100 would bid 50.5 in total against a share of 50/38.
        let total: f64 = values.iter().sum();
        let BidDecision::Alpha(boot) = lp.decide(&request(&values, 50.0)).unwrap() else { unreachable!() };
        assert!((boot - 50.0 / 38.0 / total).abs() < 1e-12, "{boot}");
        assert!(boot * total <= 50.0 / 38.0 + 1e-12);
        let lwc = vec![0.1; values.len()];
        let zeros = vec![0.0; values.len()];
        lp.observe(&StepFeedback {
            step_index: 10,
            values: &values,
            bids: &zeros,
            least_winning_costs: &lwc,
            costs: &zeros,
            spend: 0.0,
            value: 0.0,
            remaining_budget: 50.0,
        });
        // 38 future steps of 100, this step 100: share 1/38 of 50, about
        // 13 items at cost 0.1, so the threshold is the 14th best value.
        let BidDecision::Alpha(alpha) = lp.decide(&request(&values, 50.0)).unwrap() else { unreachable!() };
        let pairs: Vec<_> = values.iter().map(|&v| (v, 0.1)).collect();
        let rho = greedy_threshold(&pairs, 50.0 / 38.0).unwrap();
        assert!((alpha - 1.0 / rho).abs() < 1e-9);
        assert!((rho - 0.0087 / 0.1).abs() < 1e-9, "{rho}");
    }

    #[test]
    fn bootstrap_uses_alpha0_when_it_fits() {
        let mut lp = OnlineLp::new(OnlineLpParams::default());
        let values = [0.001, 0.002];
        assert_eq!(lp.decide(&request(&values, 1e6)).unwrap(), BidDecision::Alpha(100.0));
    }

    #[test]
    fn empty_budget_bids_zero() {
        let mut lp = OnlineLp::new(OnlineLpParams::default());
        assert_eq!(lp.decide(&request(&[0.1], 0.0)).unwrap(), BidDecision::Alpha(0.0));
    }
}
