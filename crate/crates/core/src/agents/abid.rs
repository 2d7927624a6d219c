//! Fixed bid rate.

use super::{AgentError, BidDecision, BidRequest, BiddingStrategy};

/// Bids `alpha0 · v` on every opportunity.
#[derive(Clone, Debug, PartialEq)]
pub struct Abid {
    alpha0: f64,
}

impl Abid {
    /// Panics unless `alpha0` is positive and finite.
    pub fn new(alpha0: f64) -> Self {
        assert!(alpha0 > 0.0 && alpha0.is_finite(), "alpha0 must be positive, got {alpha0}");
        Self { alpha0 }
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }
}

impl BiddingStrategy for Abid {
    fn label(&self) -> &str {
        "Abid"
    }

    fn decide(&mut self, _request: &BidRequest<'_>) -> Result<BidDecision, AgentError> {
        Ok(BidDecision::Alpha(self.alpha0))
    }
}
