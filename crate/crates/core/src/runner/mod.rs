//! The episode loop: bid collection, auctions, settlement, scoring.

pub mod evaluate;
pub mod suite;

use std::io::Write;

use log::{debug, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::agents::{
    resolve_bids, AgentError, BidRequest, BiddingStrategy, EpisodeSummary, HistoryEntry, StepFeedback,
};
use crate::auction::{run_auction, AuctionOutcome, Bid, MechanismSpec};
use crate::domain::{cpa, cpa_penalty, AdOpportunity, AdvertiserProfile, AgentState, ConfigError, EpisodeConfig, Task};
use crate::io::records::{ImpressionRecord, RecordError, RecordWriter};
use crate::opportunity::SourceError;
use crate::rng::{stream_rng, Stream};

pub use evaluate::{evaluate, AlgorithmScore, EvaluationConfig, EvaluationReport, RoundRecord};
pub use suite::{build_profiles, build_strategy, AbidParams, ExternalParams, ProfileConfig, StrategySpec};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("{profiles} profiles and {strategies} strategies for {agents} agents")]
    AgentCount { agents: usize, profiles: usize, strategies: usize },
    #[error("opportunity {pv_index} carries {found} values, expected {expected}")]
    Dimension { pv_index: u64, expected: usize, found: usize },
    #[error("opportunity {pv_index} is labelled step {found} but arrived in step {expected}")]
    StepMismatch { pv_index: u64, expected: usize, found: usize },
    #[error("opportunity {pv_index} is out of pvIndex order")]
    PvOrder { pv_index: u64 },
    #[error("source yielded {found} steps, expected {expected}")]
    StepCount { expected: usize, found: usize },
    #[error("agent {agent} failed to start: {source}")]
    AgentStartup { agent: usize, source: AgentError },
}

/// Receives the impression rows of each opportunity as it settles.
pub trait RecordSink {
    fn write_opportunity(&mut self, rows: &mut Vec<ImpressionRecord>) -> Result<(), RecordError>;
}

impl<W: Write> RecordSink for RecordWriter<W> {
    fn write_opportunity(&mut self, rows: &mut Vec<ImpressionRecord>) -> Result<(), RecordError> {
        RecordWriter::write_opportunity(self, rows)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentResult {
    pub advertiser_index: usize,
    pub label: String,
    pub category_index: usize,
    pub budget: f64,
    pub cpa_constraint: f64,
    /// Σ pValue over exposed, settled wins.
    pub total_value: f64,
    pub total_cost: f64,
    pub cpa: f64,
    pub penalty: f64,
    /// `total_value` on the basic task, `penalty · total_value` on Target CPA.
    pub score: f64,
    pub wins: u64,
    pub voided: u64,
    pub faulted: bool,
    /// First step at which the agent started out of budget.
    pub ended_step: Option<usize>,
    pub spend_series: Vec<f64>,
    pub value_series: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub period: u32,
    pub opportunities: u64,
    pub agents: Vec<AgentResult>,
}

/// `cpa_penalty(cpa, d, β) · total_value` for one agent.
pub fn score_target_cpa(result: &AgentResult, d: f64, beta: f64) -> f64 {
    if !(result.total_value > 0.0) {
        return 0.0;
    }
    cpa_penalty(cpa(result.total_cost, result.total_value), d, beta) * result.total_value
}

struct AgentSlot {
    strategy: Box<dyn BiddingStrategy>,
    state: AgentState,
    faulted: bool,
    history: Vec<HistoryEntry>,
    ended_step: Option<usize>,
    wins: u64,
    voided: u64,
    spend_series: Vec<f64>,
    value_series: Vec<f64>,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn auction_index(period: u32, pv_index: u64) -> u64 {
    ((period as u64) << 40) ^ pv_index
}

/// Runs one delivery period.
///
/// `source` must yield exactly `config.num_steps` batches, each sorted by
/// `pv_index`. Strategy `i` bids for `profiles[i]`. When `sink` is given,
/// every opportunity's rows are passed to it in settlement order.
pub fn run_episode<I>(
    config: &EpisodeConfig,
    profiles: &[AdvertiserProfile],
    strategies: Vec<Box<dyn BiddingStrategy>>,
    source: I,
    period: u32,
    mut sink: Option<&mut dyn RecordSink>,
) -> Result<EpisodeResult, RunError>
where
    I: IntoIterator<Item = Result<Vec<AdOpportunity>, SourceError>>,
{
    config.validate()?;
    let n = config.num_agents;
    if profiles.len() != n || strategies.len() != n {
        return Err(RunError::AgentCount { agents: n, profiles: profiles.len(), strategies: strategies.len() });
    }
    for p in profiles {
        p.validate()?;
    }
    let spec = config.mechanism_spec();
    let t_max = config.num_steps;
    let mut slots: Vec<AgentSlot> = strategies
        .into_iter()
        .zip(profiles)
        .map(|(strategy, p)| AgentSlot {
            strategy,
            state: AgentState::new(p.budget, 0.0),
            faulted: false,
            history: Vec::with_capacity(t_max),
            ended_step: None,
            wins: 0,
            voided: 0,
            spend_series: vec![0.0; t_max],
            value_series: vec![0.0; t_max],
        })
        .collect();

    let mut steps_seen = 0;
    let mut opportunities = 0u64;
    let mut last_pv: Option<u64> = None;
    let mut rows = Vec::with_capacity(n);
    for (t, batch) in source.into_iter().enumerate() {
        let batch = batch?;
        if t >= t_max {
            return Err(RunError::StepCount { expected: t_max, found: t + 1 });
        }
        steps_seen = t + 1;
        for o in &batch {
            if o.values.len() != n || o.value_sigmas.len() != n {
                return Err(RunError::Dimension { pv_index: o.pv_index, expected: n, found: o.values.len() });
            }
            if o.step_index != t {
                return Err(RunError::StepMismatch { pv_index: o.pv_index, expected: t, found: o.step_index });
            }
            if last_pv.is_some_and(|p| o.pv_index <= p) {
                return Err(RunError::PvOrder { pv_index: o.pv_index });
            }
            last_pv = Some(o.pv_index);
        }
        opportunities += batch.len() as u64;
        let step_sink = match sink {
            Some(ref mut s) => Some(&mut **s as &mut dyn RecordSink),
            None => None,
        };
        let step = run_step(config, &spec, profiles, &mut slots, &batch, t, period, step_sink, &mut rows)?;
        debug!("period {period} step {t}: {} opportunities, mean lwc {:.4}", batch.len(), step);
    }
    if steps_seen != t_max {
        return Err(RunError::StepCount { expected: t_max, found: steps_seen });
    }

    let agents = slots
        .into_iter()
        .zip(profiles)
        .map(|(mut slot, p)| {
            let total_value: f64 = slot.value_series.iter().sum();
            let total_cost = slot.state.cumulative_cost();
            let cpa_value = cpa(total_cost, total_value);
            let penalty = cpa_penalty(cpa_value, p.cpa_constraint, config.penalty_exponent);
            let score = match config.task {
                Task::Basic => total_value,
                Task::TargetCpa => if total_value > 0.0 { penalty * total_value } else { 0.0 },
            };
            slot.strategy.finish(&EpisodeSummary { reward: total_value, cpa: cpa_value, penalty, score });
            AgentResult {
                advertiser_index: p.advertiser_index,
                label: slot.strategy.label().to_string(),
                category_index: p.category_index,
                budget: p.budget,
                cpa_constraint: p.cpa_constraint,
                total_value,
                total_cost,
                cpa: cpa_value,
                penalty,
                score,
                wins: slot.wins,
                voided: slot.voided,
                faulted: slot.faulted,
                ended_step: slot.ended_step,
                spend_series: slot.spend_series,
                value_series: slot.value_series,
            }
        })
        .collect();
    Ok(EpisodeResult { period, opportunities, agents })
}

#[allow(clippy::too_many_arguments)]
fn run_step(
    config: &EpisodeConfig,
    spec: &MechanismSpec<f64>,
    profiles: &[AdvertiserProfile],
    slots: &mut [AgentSlot],
    batch: &[AdOpportunity],
    t: usize,
    period: u32,
    sink: Option<&mut dyn RecordSink>,
    rows: &mut Vec<ImpressionRecord>,
) -> Result<f64, RunError> {
    let m = batch.len();
    let n = slots.len();

    // Bid collection.
    let step_start: Vec<(f64, bool)> = slots
        .iter_mut()
        .map(|s| {
            let ended = s.state.refresh_ended();
            if ended && s.ended_step.is_none() {
                s.ended_step = Some(t);
            }
            (s.state.remaining_budget(), ended)
        })
        .collect();
    let bids: Vec<Vec<f64>> = slots
        .par_iter_mut()
        .enumerate()
        .map(|(i, slot)| {
            let values: Vec<f64> = batch.iter().map(|o| o.values[i]).collect();
            let (remaining, ended) = step_start[i];
            if ended || slot.faulted || m == 0 {
                return vec![0.0; m];
            }
            let sigmas: Vec<f64> = batch.iter().map(|o| o.value_sigmas[i]).collect();
            let request = BidRequest {
                agent_index: i,
                step_index: t,
                num_steps: config.num_steps,
                budget: slot.state.budget(),
                remaining_budget: remaining,
                cpa_constraint: profiles[i].cpa_constraint,
                values: &values,
                sigmas: &sigmas,
                history: &slot.history,
            };
            match slot.strategy.decide(&request).and_then(|d| resolve_bids(d, &values)) {
                Ok(mut bids) => {
                    // Bids above the remaining budget are ignored.
                    for b in bids.iter_mut().filter(|b| **b > remaining) {
                        *b = 0.0;
                    }
                    bids
                }
                Err(e) => {
                    warn!("agent {i} faulted at step {t}: {e}; bidding zero from now on");
                    slot.faulted = true;
                    vec![0.0; m]
                }
            }
        })
        .collect();

    // Auctions are independent per opportunity.
    let outcomes: Vec<AuctionOutcome<f64>> = batch
        .par_iter()
        .enumerate()
        .map(|(j, o)| {
            let entries: Vec<Bid<f64>> =
                (0..n).filter(|&i| bids[i][j] > 0.0).map(|i| Bid::new(i, bids[i][j])).collect();
            let mut rng = stream_rng(config.seed, Stream::Auction, auction_index(period, o.pv_index));
            run_auction(o.pv_index, &entries, spec, &o.values, &o.value_sigmas, &mut rng)
        })
        .collect();

    // Settlement, sequential in pvIndex order.
    let mut costs = vec![vec![0.0; m]; n];
    let mut lwcs = Vec::with_capacity(m);
    let mut sink = sink;
    for (j, (o, outcome)) in batch.iter().zip(&outcomes).enumerate() {
        lwcs.push(outcome.least_winning_cost);
        let mut settled: Vec<(usize, bool)> = Vec::with_capacity(outcome.winners.len());
        for w in &outcome.winners {
            if !w.exposed {
                settled.push((w.agent, true));
                continue;
            }
            let slot = &mut slots[w.agent];
            let value = o.values[w.agent];
            if slot.state.try_settle(w.potential_cost, value) {
                costs[w.agent][j] = w.potential_cost;
                slot.spend_series[t] += w.potential_cost;
                slot.value_series[t] += value;
                slot.wins += 1;
                settled.push((w.agent, true));
            } else {
                slot.voided += 1;
                settled.push((w.agent, false));
            }
        }
        if let Some(sink) = sink.as_deref_mut() {
            rows.clear();
            rows.extend((0..n).map(|i| {
                let p = &profiles[i];
                let mut r = ImpressionRecord {
                    delivery_period_index: period,
                    advertiser_index: p.advertiser_index,
                    advertiser_category_index: p.category_index,
                    budget: p.budget,
                    cpa_constraint: p.cpa_constraint,
                    time_step_index: t,
                    remaining_budget: step_start[i].0,
                    pv_index: o.pv_index,
                    p_value: o.values[i],
                    p_value_sigma: o.value_sigmas[i],
                    bid: bids[i][j],
                    xi: false,
                    ad_slot: 0,
                    cost: 0.0,
                    is_exposed: false,
                    conversion_action: false,
                    least_winning_cost: outcome.least_winning_cost,
                    is_end: step_start[i].1,
                };
                if let Some(k) = outcome.winners.iter().position(|w| w.agent == i) {
                    let w = &outcome.winners[k];
                    r.xi = true;
                    r.ad_slot = w.slot;
                    if settled[k].1 {
                        r.cost = w.potential_cost;
                        r.is_exposed = w.exposed;
                        r.conversion_action = w.converted;
                    }
                }
                r
            }));
            sink.write_opportunity(rows)?;
        }
    }

    // History and feedback.
    let mut sorted_lwc = lwcs.clone();
    sorted_lwc.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean_lwc = if m > 0 { lwcs.iter().sum::<f64>() / m as f64 } else { 0.0 };
    let quantiles = [0.25, 0.5, 0.75].map(|q| quantile_sorted(&sorted_lwc, q));
    slots.par_iter_mut().enumerate().for_each(|(i, slot)| {
        let wins = costs[i].iter().filter(|&&c| c > 0.0).count();
        slot.history.push(HistoryEntry {
            step: t,
            opportunities: m,
            spend: slot.spend_series[t],
            value: slot.value_series[t],
            wins,
            mean_least_winning_cost: mean_lwc,
            least_winning_cost_quantiles: quantiles,
        });
        if !slot.faulted {
            let values: Vec<f64> = batch.iter().map(|o| o.values[i]).collect();
            slot.strategy.observe(&StepFeedback {
                step_index: t,
                values: &values,
                bids: &bids[i],
                least_winning_costs: &lwcs,
                costs: &costs[i],
                spend: slot.spend_series[t],
                value: slot.value_series[t],
                remaining_budget: slot.state.remaining_budget(),
            });
        }
    });
    Ok(mean_lwc)
}
