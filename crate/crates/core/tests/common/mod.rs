#![allow(dead_code)]

use auction_arena::agents::{AgentError, BidDecision, BidRequest, BiddingStrategy};
use auction_arena::io::records::{read_records, ImpressionRecord, RecordWriter};
use auction_arena::opportunity::SourceError;
use auction_arena::{AdOpportunity, AdvertiserProfile, AgentKind, EpisodeConfig, EpisodeResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Batch = Result<Vec<AdOpportunity>, SourceError>;

/// Bids from a closure of the request.
pub struct Scripted<F>(pub F);

impl<F> BiddingStrategy for Scripted<F>
where
    F: FnMut(&BidRequest<'_>) -> BidDecision + Send,
{
    fn label(&self) -> &str {
        "Scripted"
    }

    fn decide(&mut self, request: &BidRequest<'_>) -> Result<BidDecision, AgentError> {
        Ok((self.0)(request))
    }
}

pub fn fixed_alpha(alpha: f64) -> Box<dyn BiddingStrategy> {
    Box::new(Scripted(move |_: &BidRequest<'_>| BidDecision::Alpha(alpha)))
}

pub fn profile(index: usize, budget: f64, cpa: f64) -> AdvertiserProfile {
    AdvertiserProfile {
        advertiser_index: index,
        category_index: index % 60,
        budget,
        cpa_constraint: cpa,
        agent_kind: AgentKind::External,
    }
}

pub fn small_config(num_agents: usize, num_steps: usize, opportunities: u64, seed: u64) -> EpisodeConfig {
    EpisodeConfig {
        num_agents,
        num_steps,
        num_slots: 3.min(num_agents),
        opportunities_per_episode: opportunities,
        exposure_rates: vec![1.0, 0.8, 0.6][..3.min(num_agents)].to_vec(),
        seed,
        ..EpisodeConfig::default()
    }
}

/// `per_step` opportunities per step with values drawn by `value(rng, agent)`.
pub fn stream<F>(num_agents: usize, num_steps: usize, per_step: usize, seed: u64, mut value: F) -> Vec<Batch>
where
    F: FnMut(&mut ChaCha8Rng, usize) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pv = 0u64;
    (0..num_steps)
        .map(|t| {
            Ok((0..per_step)
                .map(|_| {
                    let values: Vec<f64> = (0..num_agents).map(|i| value(&mut rng, i)).collect();
                    let value_sigmas = values.iter().map(|v| v * 0.1).collect();
                    pv += 1;
                    AdOpportunity { pv_index: pv - 1, step_index: t, features: None, values, value_sigmas }
                })
                .collect())
        })
        .collect()
}

pub fn uniform_values(num_agents: usize, num_steps: usize, per_step: usize, seed: u64) -> Vec<Batch> {
    stream(num_agents, num_steps, per_step, seed, |rng, _| rng.random_range(0.001..0.02))
}

/// Runs an episode and returns the result with the parsed impression log.
pub fn run_logged(
    config: &EpisodeConfig,
    profiles: &[AdvertiserProfile],
    strategies: Vec<Box<dyn BiddingStrategy>>,
    source: Vec<Batch>,
    top_k: usize,
) -> (EpisodeResult, Vec<u8>, Vec<ImpressionRecord>) {
    let mut writer = RecordWriter::new(Vec::new(), top_k).unwrap();
    let result = auction_arena::run_episode(config, profiles, strategies, source, 0, Some(&mut writer)).unwrap();
    let (_, bytes) = writer.finish().unwrap();
    let records = read_records(bytes.as_slice(), config.num_slots).unwrap();
    (result, bytes, records)
}
