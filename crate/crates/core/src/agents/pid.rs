//! Spend-pacing PID controller on the bid coefficient.
//!
//! The setpoint is uniform pacing. The error at step `t` is the remaining
//! budget relative to what the uniform plan would have left, minus one:
//! positive when behind plan, negative when ahead. The controller runs in
//! velocity form on `log α`,
//! `log α ← log α + λP·Δe + λI·e + λD·Δ²e`,
//! so α stays positive and clamping it never winds up an integral.

use serde::{Deserialize, Serialize};

use super::{AgentError, BidDecision, BidRequest, BiddingStrategy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidParams {
    pub lambda_p: f64,
    pub lambda_i: f64,
    pub lambda_d: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Starting coefficient; the CPA constraint when unset.
    pub alpha0: Option<f64>,
}

impl Default for PidParams {
    fn default() -> Self {
        Self {
            lambda_p: 2.0,
            lambda_i: 0.1,
            lambda_d: 0.0,
            alpha_min: 0.1,
            alpha_max: 10_000.0,
            alpha0: None,
        }
    }
}

impl PidParams {
    pub fn validate(&self) -> Result<(), String> {
        let gains = [self.lambda_p, self.lambda_i, self.lambda_d];
        if gains.iter().any(|g| !g.is_finite()) {
            return Err("PID gains must be finite".into());
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= self.alpha_max && self.alpha_max.is_finite()) {
            return Err("need 0 < alpha_min <= alpha_max < inf".into());
        }
        if let Some(a) = self.alpha0 {
            if !(a > 0.0 && a.is_finite()) {
                return Err("alpha0 must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pid {
    params: PidParams,
    alpha: Option<f64>,
    /// The last two errors, most recent first.
    errors: [f64; 2],
}

impl Pid {
    pub fn new(params: PidParams) -> Self {
        Self { params, alpha: None, errors: [0.0; 2] }
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    /// Remaining budget over the uniform plan's remaining budget, minus one.
    /// Zero for a zero budget.
    pub fn pacing_error(request: &BidRequest<'_>) -> f64 {
        if !(request.budget > 0.0) {
            return 0.0;
        }
        let planned = 1.0 - request.step_index as f64 / request.num_steps as f64;
        (request.remaining_budget / request.budget) / planned - 1.0
    }

    /// Applies one controller update for error `e` and returns the new α.
    pub fn update(&mut self, alpha: f64, e: f64) -> f64 {
        let p = &self.params;
        let [e1, e2] = self.errors;
        let exponent = p.lambda_p * (e - e1) + p.lambda_i * e + p.lambda_d * (e - 2.0 * e1 + e2);
        self.errors = [e, e1];
        (alpha * exponent.exp()).clamp(p.alpha_min, p.alpha_max)
    }
}

impl BiddingStrategy for Pid {
    fn label(&self) -> &str {
        "PID"
    }

    fn decide(&mut self, request: &BidRequest<'_>) -> Result<BidDecision, AgentError> {
        let alpha = match self.alpha {
            None => {
                let e = Self::pacing_error(request);
                self.errors = [e, e];
                self.params
                    .alpha0
                    .unwrap_or(request.cpa_constraint)
                    .clamp(self.params.alpha_min, self.params.alpha_max)
            }
            Some(a) => {
                let e = Self::pacing_error(request);
                self.update(a, e)
            }
        };
        self.alpha = Some(alpha);
        Ok(BidDecision::Alpha(alpha))
    }
}
