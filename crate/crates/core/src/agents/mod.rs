//! Bidding strategies.
//!
//! Every strategy bids proportionally to value: it either returns a single
//! coefficient `α` (the runner bids `α · v_j`) or an explicit bid vector
//! (external agents only). The runner zeroes bids on zero-value
//! opportunities and for ended agents.

pub mod abid;
pub mod external;
pub mod online_lp;
pub mod pid;
pub mod protocol;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use abid::Abid;
pub use external::{ExternalAgent, ExternalEndpoint};
pub use online_lp::{greedy_threshold, OnlineLp, OnlineLpParams};
pub use pid::{Pid, PidParams};

/// Static facts an agent learns at the start of an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentContext {
    pub agent_index: usize,
    pub category_index: usize,
    pub budget: f64,
    pub cpa_constraint: f64,
    pub num_steps: usize,
}

/// Per-step summary of one agent's past, visible to later steps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub opportunities: usize,
    pub spend: f64,
    pub value: f64,
    pub wins: usize,
    pub mean_least_winning_cost: f64,
    /// 25th, 50th and 75th percentiles of the step's least winning costs.
    pub least_winning_cost_quantiles: [f64; 3],
}

/// The observation handed to a strategy before it bids on a step.
#[derive(Clone, Copy, Debug)]
pub struct BidRequest<'a> {
    pub agent_index: usize,
    pub step_index: usize,
    pub num_steps: usize,
    pub budget: f64,
    pub remaining_budget: f64,
    pub cpa_constraint: f64,
    pub values: &'a [f64],
    pub sigmas: &'a [f64],
    /// One entry per completed step, oldest first.
    pub history: &'a [HistoryEntry],
}

impl BidRequest<'_> {
    /// Fraction of the period still ahead, counting the current step.
    pub fn time_left(&self) -> f64 {
        (self.num_steps - self.step_index) as f64 / self.num_steps as f64
    }

    pub fn spent(&self) -> f64 {
        self.budget - self.remaining_budget
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BidDecision {
    Alpha(f64),
    Bids(Vec<f64>),
}

/// What an agent sees after a step settles, aligned with the request's
/// `values`.
#[derive(Clone, Copy, Debug)]
pub struct StepFeedback<'a> {
    pub step_index: usize,
    pub values: &'a [f64],
    pub bids: &'a [f64],
    pub least_winning_costs: &'a [f64],
    /// Charged cost per opportunity; zero unless won, exposed and settled.
    pub costs: &'a [f64],
    pub spend: f64,
    pub value: f64,
    pub remaining_budget: f64,
}

/// End-of-episode summary sent to each agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub reward: f64,
    pub cpa: f64,
    pub penalty: f64,
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("agent connection closed")]
    Closed,
    #[error("agent I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid bids: {0}")]
    InvalidBids(String),
}

pub trait BiddingStrategy: Send {
    fn label(&self) -> &str;

    fn decide(&mut self, request: &BidRequest<'_>) -> Result<BidDecision, AgentError>;

    fn observe(&mut self, _feedback: &StepFeedback<'_>) {}

    fn finish(&mut self, _summary: &EpisodeSummary) {}
}

/// Turns a decision into a validated bid vector.
///
/// Zero-value opportunities always get a zero bid.
pub fn resolve_bids(decision: BidDecision, values: &[f64]) -> Result<Vec<f64>, AgentError> {
    let mut bids = match decision {
        BidDecision::Alpha(alpha) => {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return Err(AgentError::InvalidBids(format!("alpha {alpha} is not a finite non-negative number")));
            }
            values.iter().map(|v| alpha * v).collect()
        }
        BidDecision::Bids(bids) => {
            if bids.len() != values.len() {
                return Err(AgentError::InvalidBids(format!(
                    "expected {} bids, got {}",
                    values.len(),
                    bids.len()
                )));
            }
            if let Some(b) = bids.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
                return Err(AgentError::InvalidBids(format!("bid {b} is not a finite non-negative number")));
            }
            bids
        }
    };
    for (b, v) in bids.iter_mut().zip(values) {
        if *v <= 0.0 {
            *b = 0.0;
        }
    }
    Ok(bids)
}
