//! Multi-round evaluation with permuted profile assignments, normalized by
//! the fixed-rate baseline.

use std::fmt::Write as _;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::suite::{build_profiles, build_strategy, ProfileConfig, StrategySpec};
use super::{run_episode, RunError};
use crate::agents::{AgentContext, BiddingStrategy};
use crate::domain::{AgentKind, ConfigError, EpisodeConfig};
use crate::opportunity::{GeneratorConfig, ParametricSource};
use crate::rng::{derive_seed, stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub rounds: usize,
    pub master_seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { rounds: 7, master_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub episode_seed: u64,
    pub permutation_seed: u64,
    /// `permutation[k]` is the profile slot of suite agent `k`.
    pub permutation: Vec<usize>,
    /// Best score per algorithm, in report order.
    pub representatives: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmScore {
    pub label: String,
    pub agents: usize,
    pub mean_score: f64,
    pub mean_normalized: f64,
    /// Sample standard deviation of the per-round normalized score.
    pub std_normalized: f64,
    pub faults: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub master_seed: u64,
    /// Mean representative score of the fixed-rate baseline.
    pub normalizer: f64,
    pub algorithms: Vec<AlgorithmScore>,
    pub rounds: Vec<RoundRecord>,
}

impl EvaluationReport {
    pub fn algorithm(&self, label: &str) -> Option<&AlgorithmScore> {
        self.algorithms.iter().find(|a| a.label == label)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("algorithm\tagents\tmean_score\tmean_normalized\tstd_normalized\tfaults\n");
        for a in &self.algorithms {
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                a.label, a.agents, a.mean_score, a.mean_normalized, a.std_normalized, a.faults
            )
            .unwrap();
        }
        s
    }

    pub fn rounds_tsv(&self) -> String {
        let mut s = String::from("round\tepisode_seed\tpermutation_seed");
        for a in &self.algorithms {
            write!(s, "\t{}", a.label).unwrap();
        }
        s.push('\n');
        for r in &self.rounds {
            write!(s, "{}\t{}\t{}", r.round, r.episode_seed, r.permutation_seed).unwrap();
            for v in &r.representatives {
                write!(s, "\t{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Fixed-width table for terminals.
    pub fn render(&self) -> String {
        let mut s = format!("{:<10} {:>6} {:>14} {:>10} {:>10}\n", "algorithm", "agents", "mean_score", "normalized", "std");
        for a in &self.algorithms {
            writeln!(
                s,
                "{:<10} {:>6} {:>14.6} {:>10.4} {:>10.4}",
                a.label, a.agents, a.mean_score, a.mean_normalized, a.std_normalized
            )
            .unwrap();
        }
        s
    }
}

fn label_of(kind: AgentKind) -> &'static str {
    kind.label()
}

/// Runs `evaluation.rounds` episodes of the suite.
///
/// The profile slots are fixed by the master seed. Each round draws a fresh
/// opportunity stream and a seeded permutation assigning suite agents to
/// slots. Per round and algorithm the best agent is the representative;
/// scores are normalized by the baseline's mean representative score.
pub fn evaluate(
    episode: &EpisodeConfig,
    generator: &GeneratorConfig,
    profile_config: &ProfileConfig,
    suite: &[StrategySpec],
    evaluation: &EvaluationConfig,
) -> Result<EvaluationReport, RunError> {
    episode.validate()?;
    profile_config.validate()?;
    if suite.len() != episode.num_agents {
        return Err(RunError::AgentCount { agents: episode.num_agents, profiles: episode.num_agents, strategies: suite.len() });
    }
    if !suite.iter().any(|s| s.kind() == AgentKind::Abid) {
        return Err(ConfigError::Invalid("the suite needs at least one abid agent as the normalizer".into()).into());
    }
    if evaluation.rounds == 0 {
        return Err(ConfigError::NotPositive { field: "rounds" }.into());
    }
    for s in suite {
        s.validate()?;
    }
    let master = evaluation.master_seed;
    let mut labels: Vec<&'static str> = Vec::new();
    for s in suite {
        let l = label_of(s.kind());
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    let base_profiles = build_profiles(episode, profile_config, derive_seed(master, Stream::Profiles, 0));

    let mut rounds = Vec::with_capacity(evaluation.rounds);
    let mut faults = vec![0usize; labels.len()];
    for round in 0..evaluation.rounds {
        let episode_seed = derive_seed(master, Stream::Episode, round as u64);
        let permutation_seed = derive_seed(master, Stream::Permutation, round as u64);
        let mut permutation: Vec<usize> = (0..suite.len()).collect();
        permutation.shuffle(&mut stream_rng(permutation_seed, Stream::Permutation, 0));

        let config = EpisodeConfig { seed: episode_seed, ..episode.clone() };
        let mut profiles = base_profiles.clone();
        let mut owner = vec![0usize; suite.len()];
        for (k, &slot) in permutation.iter().enumerate() {
            profiles[slot].agent_kind = suite[k].kind();
            owner[slot] = k;
        }
        let strategies = profiles
            .iter()
            .enumerate()
            .map(|(slot, p)| {
                let k = owner[slot];
                let context = AgentContext {
                    agent_index: slot,
                    category_index: p.category_index,
                    budget: p.budget,
                    cpa_constraint: p.cpa_constraint,
                    num_steps: config.num_steps,
                };
                build_strategy(&suite[k], &context, derive_seed(master, Stream::Agent, k as u64))
                    .map_err(|source| RunError::AgentStartup { agent: slot, source })
            })
            .collect::<Result<Vec<Box<dyn BiddingStrategy>>, _>>()?;
        let source = ParametricSource::new(&config, generator, &profiles, round as u32);
        let result = run_episode(&config, &profiles, strategies, source, round as u32, None)?;

        let mut representatives = vec![f64::NEG_INFINITY; labels.len()];
        for (slot, agent) in result.agents.iter().enumerate() {
            let li = labels.iter().position(|&l| l == label_of(profiles[slot].agent_kind)).unwrap();
            representatives[li] = representatives[li].max(agent.score);
            faults[li] += agent.faulted as usize;
        }
        info!("round {round}: {:?}", labels.iter().zip(&representatives).collect::<Vec<_>>());
        rounds.push(RoundRecord { round, episode_seed, permutation_seed, permutation, representatives });
    }

    let abid = labels.iter().position(|&l| l == AgentKind::Abid.label()).unwrap();
    let r = rounds.len() as f64;
    let normalizer = rounds.iter().map(|x| x.representatives[abid]).sum::<f64>() / r;
    let algorithms = labels
        .iter()
        .enumerate()
        .map(|(li, &label)| {
            let scores: Vec<f64> = rounds.iter().map(|x| x.representatives[li]).collect();
            let normalized: Vec<f64> =
                scores.iter().map(|&s| if normalizer > 0.0 { s / normalizer } else { 0.0 }).collect();
            let mean = normalized.iter().sum::<f64>() / r;
            let std = if rounds.len() > 1 {
                (normalized.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
            } else {
                0.0
            };
            AlgorithmScore {
                label: label.to_string(),
                agents: suite.iter().filter(|s| label_of(s.kind()) == label).count(),
                mean_score: scores.iter().sum::<f64>() / r,
                mean_normalized: mean,
                std_normalized: std,
                faults: faults[li],
            }
        })
        .collect();
    Ok(EvaluationReport { master_seed: master, normalizer, algorithms, rounds })
}
