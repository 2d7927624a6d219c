//! Core vocabulary shared by every other module: episode configuration,
//! advertisers, ad opportunities, per-agent budget state and the two scoring
//! primitives (allocated value and the CPA penalty).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::MechanismSpec;
use crate::num::Real;

/// Dimension of an ad-opportunity feature vector.
pub const FEATURE_DIM: usize = 176;
/// Size of the advertiser category space; index 0 is "Other".
pub const NUM_CATEGORIES: usize = 60;
/// Agents whose remaining budget falls below this are ended for the episode.
pub const END_BUDGET_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Gsp,
    FirstPrice,
}

/// Which objective an episode is scored under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Budget-constrained value maximization.
    Basic,
    /// Value scaled by the CPA penalty, revealed only at episode end.
    TargetCpa,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field} must be positive")]
    NotPositive { field: &'static str },
    #[error("num_slots ({slots}) exceeds num_agents ({agents})")]
    TooManySlots { slots: usize, agents: usize },
    #[error("opportunities_per_episode ({total}) is smaller than num_steps ({steps})")]
    TooFewOpportunities { total: u64, steps: usize },
    #[error("expected {expected} exposure rates, got {got}")]
    ExposureRateCount { expected: usize, got: usize },
    #[error("exposure rate {0} is outside (0, 1]")]
    ExposureRateRange(f64),
    #[error("exposure rates must be non-increasing")]
    ExposureRateOrder,
    #[error("reserve price must be finite and non-negative, got {0}")]
    Reserve(f64),
    #[error("advertiser {index}: {reason}")]
    Profile { index: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
}

/// Static parameters of one delivery period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub num_steps: usize,
    pub num_agents: usize,
    pub num_slots: usize,
    pub opportunities_per_episode: u64,
    pub penalty_exponent: f64,
    pub exposure_rates: Vec<f64>,
    pub seed: u64,
    pub mechanism: MechanismKind,
    pub reserve_price: f64,
    pub task: Task,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            num_steps: 48,
            num_agents: 48,
            num_slots: 3,
            opportunities_per_episode: 500_000,
            penalty_exponent: 3.0,
            exposure_rates: vec![1.0, 0.8, 0.6],
            seed: 0,
            mechanism: MechanismKind::Gsp,
            reserve_price: 0.0,
            task: Task::Basic,
        }
    }
}

impl EpisodeConfig {
    /// The 5k-opportunity configuration used by tests and desk-scale runs.
    pub fn desk_scale(seed: u64) -> Self {
        Self { opportunities_per_episode: 5_000, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_steps == 0 {
            return Err(ConfigError::NotPositive { field: "num_steps" });
        }
        if self.num_agents == 0 {
            return Err(ConfigError::NotPositive { field: "num_agents" });
        }
        if self.num_slots == 0 {
            return Err(ConfigError::NotPositive { field: "num_slots" });
        }
        if self.opportunities_per_episode == 0 {
            return Err(ConfigError::NotPositive { field: "opportunities_per_episode" });
        }
        if !(self.penalty_exponent > 0.0 && self.penalty_exponent.is_finite()) {
            return Err(ConfigError::NotPositive { field: "penalty_exponent" });
        }
        if self.num_slots > self.num_agents {
            return Err(ConfigError::TooManySlots { slots: self.num_slots, agents: self.num_agents });
        }
        if self.opportunities_per_episode < self.num_steps as u64 {
            return Err(ConfigError::TooFewOpportunities {
                total: self.opportunities_per_episode,
                steps: self.num_steps,
            });
        }
        if !(self.reserve_price >= 0.0 && self.reserve_price.is_finite()) {
            return Err(ConfigError::Reserve(self.reserve_price));
        }
        self.mechanism_spec().validate()
    }

    pub fn mechanism_spec(&self) -> MechanismSpec<f64> {
        MechanismSpec {
            kind: self.mechanism,
            num_slots: self.num_slots,
            exposure_rates: self.exposure_rates.clone(),
            reserve_price: self.reserve_price,
        }
    }
}

/// Built-in strategy families plus out-of-process agents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Abid,
    Pid,
    OnlineLp,
    External,
}

impl AgentKind {
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Abid => "Abid",
            AgentKind::Pid => "PID",
            AgentKind::OnlineLp => "OnlineLP",
            AgentKind::External => "External",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvertiserProfile {
    pub advertiser_index: usize,
    pub category_index: usize,
    pub budget: f64,
    pub cpa_constraint: f64,
    pub agent_kind: AgentKind,
}

impl AdvertiserProfile {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |reason: String| ConfigError::Profile { index: self.advertiser_index, reason };
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return Err(fail(format!("budget must be finite and >= 0, got {}", self.budget)));
        }
        if !(self.cpa_constraint > 0.0 && self.cpa_constraint.is_finite()) {
            return Err(fail(format!("cpa_constraint must be > 0, got {}", self.cpa_constraint)));
        }
        if self.category_index >= NUM_CATEGORIES {
            return Err(fail(format!("category_index {} is outside [0, 60)", self.category_index)));
        }
        Ok(())
    }
}

/// One impression opportunity as seen by the auction.
///
/// `values[i]` and `value_sigmas[i]` belong to the advertiser at position `i`
/// of the episode's profile list.
#[derive(Clone, Debug, PartialEq)]
pub struct AdOpportunity {
    pub pv_index: u64,
    pub step_index: usize,
    /// The 176-wide user feature vector. Absent when the source was asked
    /// to skip feature synthesis (pure auction runs do not read it).
    pub features: Option<Vec<f64>>,
    pub values: Vec<f64>,
    pub value_sigmas: Vec<f64>,
}

/// Mutable per-advertiser budget accounting, owned by the episode runner.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    budget: f64,
    cumulative_cost: f64,
    cumulative_value: f64,
    pub alpha: f64,
    pub ended: bool,
}

impl AgentState {
    pub fn new(budget: f64, alpha: f64) -> Self {
        Self { budget, cumulative_cost: 0.0, cumulative_value: 0.0, alpha, ended: false }
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Always `budget - cumulative_cost`, never negative.
    pub fn remaining_budget(&self) -> f64 {
        self.budget - self.cumulative_cost
    }

    pub fn cumulative_cost(&self) -> f64 {
        self.cumulative_cost
    }

    pub fn cumulative_value(&self) -> f64 {
        self.cumulative_value
    }

    /// Marks the agent ended once its remaining budget is exhausted.
    /// Ending is permanent.
    pub fn refresh_ended(&mut self) -> bool {
        if self.remaining_budget() < END_BUDGET_THRESHOLD {
            self.ended = true;
        }
        self.ended
    }

    /// Charges `cost` and credits `value` if the budget covers the charge.
    /// Returns `false` (and changes nothing) when the impression must be
    /// voided for insufficient funds.
    pub fn try_settle(&mut self, cost: f64, value: f64) -> bool {
        let next = self.cumulative_cost + cost;
        if next > self.budget {
            return false;
        }
        self.cumulative_cost = next;
        self.cumulative_value += value;
        true
    }
}

/// `Σ x_j · v_j` for an allocation (or exposure-weighted allocation) `x`.
///
/// Panics when the slices differ in length.
pub fn inner_value<S: Real>(x: &[S], v: &[S]) -> S {
    assert_eq!(x.len(), v.len(), "allocation and value vectors differ in length");
    x.iter().zip(v).fold(S::zero(), |acc, (&a, &b)| acc + a * b)
}

/// Cost per unit of value. Zero spend is CPA 0; positive spend with no value
/// is infinite.
pub fn cpa<S: Real>(total_cost: S, total_value: S) -> S {
    if total_value > S::zero() {
        total_cost / total_value
    } else if total_cost > S::zero() {
        S::infinity()
    } else {
        S::zero()
    }
}

/// `min((d / cpa)^β, 1)`, with `cpa <= 0` treated as no violation.
pub fn cpa_penalty<S: Real>(cpa: S, d: S, beta: S) -> S {
    if !(cpa > S::zero()) {
        return S::one();
    }
    let p = (d / cpa).powf(beta);
    if p > S::one() {
        S::one()
    } else {
        p
    }
}
