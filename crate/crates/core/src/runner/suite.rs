//! Advertiser profiles and strategy construction.

use std::time::Duration;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::external::DEFAULT_TIMEOUT;
use crate::agents::{
    Abid, AgentContext, AgentError, BiddingStrategy, ExternalAgent, ExternalEndpoint, OnlineLp, OnlineLpParams, Pid,
    PidParams,
};
use crate::domain::{AdvertiserProfile, AgentKind, ConfigError, EpisodeConfig, NUM_CATEGORIES};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbidParams {
    /// Fixed coefficient. When unset, the coefficient is the CPA constraint
    /// times a seeded factor in `[1 - spread, 1 + spread]`.
    pub alpha0: Option<f64>,
    pub spread: f64,
}

impl Default for AbidParams {
    fn default() -> Self {
        Self { alpha0: None, spread: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalParams {
    pub endpoint: ExternalEndpoint,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT.as_millis() as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategySpec {
    Abid(AbidParams),
    Pid(PidParams),
    OnlineLp(OnlineLpParams),
    External(ExternalParams),
}

impl StrategySpec {
    pub fn kind(&self) -> AgentKind {
        match self {
            StrategySpec::Abid(_) => AgentKind::Abid,
            StrategySpec::Pid(_) => AgentKind::Pid,
            StrategySpec::OnlineLp(_) => AgentKind::OnlineLp,
            StrategySpec::External(_) => AgentKind::External,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let result = match self {
            StrategySpec::Abid(p) => match (p.alpha0, p.spread) {
                (Some(a), _) if !(a > 0.0 && a.is_finite()) => Err("abid alpha0 must be positive".to_string()),
                (_, s) if !(0.0..1.0).contains(&s) => Err("abid spread must lie in [0, 1)".to_string()),
                _ => Ok(()),
            },
            StrategySpec::Pid(p) => p.validate(),
            StrategySpec::OnlineLp(p) => p.validate(),
            StrategySpec::External(p) => match &p.endpoint {
                ExternalEndpoint::Command(argv) if argv.is_empty() => Err("external command is empty".to_string()),
                _ if p.timeout_ms == 0 => Err("external timeout_ms must be positive".to_string()),
                _ => Ok(()),
            },
        };
        result.map_err(ConfigError::Invalid)
    }
}

/// Builds the strategy for one agent. `agent_seed` drives any per-agent
/// randomness (the Abid spread). External agents connect here.
pub fn build_strategy(
    spec: &StrategySpec,
    context: &AgentContext,
    agent_seed: u64,
) -> Result<Box<dyn BiddingStrategy>, AgentError> {
    Ok(match spec {
        StrategySpec::Abid(p) => {
            let alpha0 = p.alpha0.unwrap_or_else(|| {
                let mut rng = stream_rng(agent_seed, Stream::Agent, 0);
                let factor = if p.spread > 0.0 { 1.0 + rng.random_range(-p.spread..p.spread) } else { 1.0 };
                context.cpa_constraint * factor
            });
            Box::new(Abid::new(alpha0))
        }
        StrategySpec::Pid(p) => Box::new(Pid::new(p.clone())),
        StrategySpec::OnlineLp(p) => Box::new(OnlineLp::new(p.clone())),
        StrategySpec::External(p) => {
            Box::new(ExternalAgent::connect(&p.endpoint, context, Duration::from_millis(p.timeout_ms))?)
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    /// Budget range at full scale (500k opportunities per period).
    pub budget_range: (f64, f64),
    pub cpa_range: (f64, f64),
    /// Multiplies budgets; defaults to `opportunities_per_episode / 500000`.
    pub budget_scale: Option<f64>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { budget_range: (6000.0, 7500.0), cpa_range: (25.0, 45.0), budget_scale: None }
    }
}

pub const FULL_SCALE_OPPORTUNITIES: f64 = 500_000.0;

impl ProfileConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (b0, b1) = self.budget_range;
        let (c0, c1) = self.cpa_range;
        if !(b0 >= 0.0 && b0 <= b1 && b1.is_finite()) {
            return Err(ConfigError::Invalid("budget_range must be 0 <= lo <= hi".into()));
        }
        if !(c0 > 0.0 && c0 <= c1 && c1.is_finite()) {
            return Err(ConfigError::Invalid("cpa_range must be 0 < lo <= hi".into()));
        }
        if let Some(s) = self.budget_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(ConfigError::Invalid("budget_scale must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn scale(&self, config: &EpisodeConfig) -> f64 {
        self.budget_scale
            .unwrap_or(config.opportunities_per_episode as f64 / FULL_SCALE_OPPORTUNITIES)
    }
}

fn cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// `config.num_agents` seeded profile slots. Budgets and CPA constraints are
/// rounded to cents; categories are distinct while there are enough of them.
/// Every slot is tagged `Abid` until a strategy is assigned.
pub fn build_profiles(config: &EpisodeConfig, profiles: &ProfileConfig, seed: u64) -> Vec<AdvertiserProfile> {
    let mut rng = stream_rng(seed, Stream::Profiles, 0);
    let scale = profiles.scale(config);
    let mut categories: Vec<usize> = (0..NUM_CATEGORIES).collect();
    categories.shuffle(&mut rng);
    (0..config.num_agents)
        .map(|i| {
            let (b0, b1) = profiles.budget_range;
            let (c0, c1) = profiles.cpa_range;
            let budget = if b1 > b0 { rng.random_range(b0..=b1) } else { b0 };
            let cpa = if c1 > c0 { rng.random_range(c0..=c1) } else { c0 };
            AdvertiserProfile {
                advertiser_index: i,
                category_index: categories[i % NUM_CATEGORIES],
                budget: cents(budget * scale),
                cpa_constraint: cents(cpa),
                agent_kind: AgentKind::Abid,
            }
        })
        .collect()
}

/// Expands `(spec, count)` groups into one spec per agent, in order.
pub fn expand_groups(groups: &[(StrategySpec, usize)]) -> Vec<StrategySpec> {
    groups.iter().flat_map(|(s, k)| std::iter::repeat_n(s.clone(), *k)).collect()
}

/// 16 Abid, 16 PID and 16 Online LP agents with default parameters.
pub fn default_suite() -> Vec<(StrategySpec, usize)> {
    vec![
        (StrategySpec::Abid(AbidParams::default()), 16),
        (StrategySpec::Pid(PidParams::default()), 16),
        (StrategySpec::OnlineLp(OnlineLpParams::default()), 16),
    ]
}
