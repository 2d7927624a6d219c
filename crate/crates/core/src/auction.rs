//! Multi-slot sealed-bid auction.
//!
//! Allocation and pricing ([`allocate`]) are deterministic; exposure and
//! conversion draws ([`realize`]) consume a caller-supplied RNG stream in a
//! fixed order (three draws per slot), so changing the pricing rule never
//! shifts the random draws.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{ConfigError, MechanismKind};
use crate::num::{clamp, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec<S> {
    pub kind: MechanismKind,
    pub num_slots: usize,
    /// Per-slot probability that the ad is shown, best slot first.
    pub exposure_rates: Vec<S>,
    pub reserve_price: S,
}

impl<S: Real> MechanismSpec<S> {
    pub fn gsp(exposure_rates: Vec<S>) -> Self {
        Self {
            kind: MechanismKind::Gsp,
            num_slots: exposure_rates.len(),
            exposure_rates,
            reserve_price: S::zero(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_slots == 0 {
            return Err(ConfigError::NotPositive { field: "num_slots" });
        }
        if self.exposure_rates.len() != self.num_slots {
            return Err(ConfigError::ExposureRateCount {
                expected: self.num_slots,
                got: self.exposure_rates.len(),
            });
        }
        for &e in &self.exposure_rates {
            if !(e > S::zero() && e <= S::one()) {
                return Err(ConfigError::ExposureRateRange(e.as_f64()));
            }
        }
        if self.exposure_rates.windows(2).any(|w| w[1] > w[0]) {
            return Err(ConfigError::ExposureRateOrder);
        }
        if !(self.reserve_price >= S::zero() && self.reserve_price.is_finite()) {
            return Err(ConfigError::Reserve(self.reserve_price.as_f64()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bid<S> {
    pub agent: usize,
    pub amount: S,
}

impl<S> Bid<S> {
    pub fn new(agent: usize, amount: S) -> Self {
        Self { agent, amount }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Winner<S> {
    pub agent: usize,
    /// 1-based slot.
    pub slot: usize,
    pub bid: S,
    /// Price owed if the slot is exposed.
    pub potential_cost: S,
    pub exposed: bool,
    pub converted: bool,
}

/// Deterministic part of an auction: who wins which slot at what price.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation<S> {
    /// Slot order, i.e. bid-descending.
    pub winners: Vec<Winner<S>>,
    pub least_winning_cost: S,
    /// Participating bids that did not win, highest first.
    pub losers: Vec<Bid<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuctionOutcome<S> {
    pub pv_index: u64,
    pub winners: Vec<Winner<S>>,
    pub least_winning_cost: S,
    pub losers_recorded: Vec<Bid<S>>,
}

impl<S: Real> AuctionOutcome<S> {
    pub fn winner_of(&self, agent: usize) -> Option<&Winner<S>> {
        self.winners.iter().find(|w| w.agent == agent)
    }
}

/// Ranking order: higher bid first, ties to the lower agent index.
pub fn rank_order<S: Real>(a: &Bid<S>, b: &Bid<S>) -> std::cmp::Ordering {
    b.amount
        .partial_cmp(&a.amount)
        .expect("bids are never NaN")
        .then(a.agent.cmp(&b.agent))
}

fn assert_distinct_agents<S>(bids: &[Bid<S>]) {
    let max = bids.iter().map(|b| b.agent).max().unwrap_or(0);
    if max < 128 {
        let mut seen = 0u128;
        for b in bids {
            let bit = 1u128 << b.agent;
            assert!(seen & bit == 0, "agent {} submitted more than one bid", b.agent);
            seen |= bit;
        }
    } else {
        let mut agents: Vec<usize> = bids.iter().map(|b| b.agent).collect();
        agents.sort_unstable();
        if let Some(w) = agents.windows(2).find(|w| w[0] == w[1]) {
            panic!("agent {} submitted more than one bid", w[0]);
        }
    }
}

/// Allocates slots and prices them.
///
/// Zero bids and bids under the reserve do not participate. The top
/// `num_slots` participants win slots `1..` in rank order. Under GSP the
/// slot-`k` winner pays the rank-`k+1` bid (the reserve when there is none);
/// under first price every winner pays its own bid. The least winning cost
/// is the highest losing bid, or the reserve when every participant won.
///
/// Panics on negative or NaN bids and on duplicate agents.
pub fn allocate<S: Real>(bids: &[Bid<S>], spec: &MechanismSpec<S>) -> Allocation<S> {
    assert_distinct_agents(bids);
    let mut ranked: Vec<Bid<S>> = bids
        .iter()
        .inspect(|b| assert!(b.amount >= S::zero(), "bid {:?} is negative or NaN", b.amount))
        .filter(|b| b.amount > S::zero() && b.amount >= spec.reserve_price)
        .copied()
        .collect();
    ranked.sort_unstable_by(rank_order);

    let l = spec.num_slots.min(ranked.len());
    let winners = (0..l)
        .map(|k| {
            let own = ranked[k].amount;
            let potential_cost = match spec.kind {
                MechanismKind::Gsp => ranked.get(k + 1).map_or(spec.reserve_price, |b| b.amount),
                MechanismKind::FirstPrice => own,
            };
            Winner {
                agent: ranked[k].agent,
                slot: k + 1,
                bid: own,
                potential_cost,
                exposed: false,
                converted: false,
            }
        })
        .collect();
    let least_winning_cost = ranked.get(spec.num_slots).map_or(spec.reserve_price, |b| b.amount);
    let losers = ranked.split_off(l);
    Allocation { winners, least_winning_cost, losers }
}

/// Draws exposure and conversion for every winner.
///
/// Slot `k` is exposed with probability `e_k`, independently of the other
/// slots. An exposed winner converts with probability
/// `clamp(pValue + sigma·ξ, 0, 1)`, ξ standard normal. `conversion_inputs`
/// maps an agent to its `(pValue, sigma)` for this opportunity.
pub fn realize<S, R, F>(
    pv_index: u64,
    allocation: Allocation<S>,
    spec: &MechanismSpec<S>,
    conversion_inputs: F,
    rng: &mut R,
) -> AuctionOutcome<S>
where
    S: Real,
    R: Rng + ?Sized,
    F: Fn(usize) -> (S, S),
{
    let Allocation { mut winners, least_winning_cost, losers } = allocation;
    for w in &mut winners {
        let u_expose: f64 = rng.random();
        let xi: f64 = rng.sample(StandardNormal);
        let u_convert: f64 = rng.random();
        w.exposed = u_expose < spec.exposure_rates[w.slot - 1].as_f64();
        if w.exposed {
            let (value, sigma) = conversion_inputs(w.agent);
            let p = clamp(value.as_f64() + sigma.as_f64() * xi, 0.0, 1.0);
            w.converted = u_convert < p;
        }
    }
    AuctionOutcome { pv_index, winners, least_winning_cost, losers_recorded: losers }
}

/// Allocation, pricing and outcome sampling for one opportunity.
///
/// `values[agent]` / `sigmas[agent]` are the opportunity's per-agent
/// predicted conversion probability and its spread.
pub fn run_auction<S, R>(
    pv_index: u64,
    bids: &[Bid<S>],
    spec: &MechanismSpec<S>,
    values: &[S],
    sigmas: &[S],
    rng: &mut R,
) -> AuctionOutcome<S>
where
    S: Real,
    R: Rng + ?Sized,
{
    let allocation = allocate(bids, spec);
    realize(pv_index, allocation, spec, |a| (values[a], sigmas[a]), rng)
}

/// Amount actually charged to winner `k` (index into `outcome.winners`):
/// the slot price if the ad was shown, otherwise nothing.
pub fn realized_cost<S: Real>(outcome: &AuctionOutcome<S>, k: usize) -> S {
    let w = &outcome.winners[k];
    if w.exposed {
        w.potential_cost
    } else {
        S::zero()
    }
}
