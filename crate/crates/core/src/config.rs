//! TOML run configuration.
//!
//! ```toml
//! periods = 1
//!
//! [episode]
//! opportunities_per_episode = 5000
//! seed = 7
//!
//! [generator]
//! with_features = false
//!
//! [profiles]
//! budget_range = [6000.0, 7500.0]
//!
//! [[agents]]
//! strategy = "pid"
//! count = 16
//! params = { lambda_p = 2.0 }
//!
//! [[agents]]
//! strategy = "external"
//! count = 1
//! command = ["python3", "my_agent.py"]
//!
//! [evaluation]
//! rounds = 7
//! master_seed = 0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{ExternalEndpoint, OnlineLpParams, PidParams};
use crate::domain::{ConfigError, EpisodeConfig};
use crate::io::records::DEFAULT_TOP_K;
use crate::opportunity::GeneratorConfig;
use crate::runner::suite::{default_suite, expand_groups};
use crate::runner::{AbidParams, EvaluationConfig, ExternalParams, ProfileConfig, StrategySpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Abid,
    Pid,
    OnlineLp,
    External,
}

impl StrategyName {
    pub fn parse(name: &str) -> Result<Self, ConfigError> {
        match name {
            "abid" => Ok(Self::Abid),
            "pid" => Ok(Self::Pid),
            "online_lp" => Ok(Self::OnlineLp),
            "external" => Ok(Self::External),
            other => Err(ConfigError::Invalid(format!(
                "unknown strategy `{other}`, expected one of abid, pid, online_lp, external"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    Process,
    Tcp,
    Stdio,
}

/// `count` agents sharing one strategy and parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentGroup {
    pub strategy: String,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default)]
    pub params: toml::Table,
    pub command: Option<Vec<String>>,
    pub address: Option<String>,
    pub transport: Option<Transport>,
    pub timeout_ms: Option<u64>,
}

fn one() -> usize {
    1
}

fn one_u32() -> u32 {
    1
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn params<T: serde::de::DeserializeOwned>(table: &toml::Table, strategy: &str) -> Result<T, ConfigError> {
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e| ConfigError::Invalid(format!("{strategy} params: {e}")))
}

impl AgentGroup {
    pub fn builtin(strategy: &str, count: usize) -> Self {
        Self {
            strategy: strategy.to_string(),
            count,
            params: toml::Table::new(),
            command: None,
            address: None,
            transport: None,
            timeout_ms: None,
        }
    }

    pub fn spec(&self) -> Result<StrategySpec, ConfigError> {
        let name = StrategyName::parse(&self.strategy)?;
        let spec = match name {
            StrategyName::Abid => StrategySpec::Abid(params::<AbidParams>(&self.params, "abid")?),
            StrategyName::Pid => StrategySpec::Pid(params::<PidParams>(&self.params, "pid")?),
            StrategyName::OnlineLp => StrategySpec::OnlineLp(params::<OnlineLpParams>(&self.params, "online_lp")?),
            StrategyName::External => {
                if !self.params.is_empty() {
                    return Err(ConfigError::Invalid("external agents take no params".into()));
                }
                let transport = self.transport.unwrap_or(match (&self.command, &self.address) {
                    (_, Some(_)) => Transport::Tcp,
                    _ => Transport::Process,
                });
                let endpoint = match (transport, &self.command, &self.address) {
                    (Transport::Process, Some(argv), None) => ExternalEndpoint::Command(argv.clone()),
                    (Transport::Tcp, None, Some(addr)) => ExternalEndpoint::Tcp(addr.clone()),
                    (Transport::Stdio, None, None) => ExternalEndpoint::Stdio,
                    _ => {
                        return Err(ConfigError::Invalid(
                            "external agents need exactly one of command (process), address (tcp), or transport = \"stdio\"".into(),
                        ))
                    }
                };
                StrategySpec::External(ExternalParams {
                    endpoint,
                    timeout_ms: self.timeout_ms.unwrap_or(crate::agents::external::DEFAULT_TIMEOUT.as_millis() as u64),
                })
            }
        };
        if name != StrategyName::External && (self.command.is_some() || self.address.is_some() || self.transport.is_some()) {
            return Err(ConfigError::Invalid(format!("{} agents take no command, address or transport", self.strategy)));
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// `abid:16,pid:16,online_lp:16` (count defaults to 1).
pub fn parse_agent_shorthand(text: &str) -> Result<Vec<AgentGroup>, ConfigError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, count) = match item.split_once(':') {
                Some((n, c)) => {
                    let count = c
                        .trim()
                        .parse()
                        .map_err(|_| ConfigError::Invalid(format!("bad agent count in `{item}`")))?;
                    (n.trim(), count)
                }
                None => (item, 1),
            };
            StrategyName::parse(name)?;
            Ok(AgentGroup::builtin(name, count))
        })
        .collect()
}

/// The agents section alone, as accepted by `--agents <file>`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsFile {
    pub agents: Vec<AgentGroup>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaConfig {
    /// Delivery periods produced by `generate` and `run`.
    #[serde(default = "one_u32")]
    pub periods: u32,
    /// Rows kept per opportunity in impression logs.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Directory of opportunity shards to replay instead of generating.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub episode: EpisodeConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub profiles: ProfileConfig,
    #[serde(default)]
    pub agents: Vec<AgentGroup>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            periods: 1,
            top_k: DEFAULT_TOP_K,
            dataset: None,
            episode: EpisodeConfig::default(),
            generator: GeneratorConfig::default(),
            profiles: ProfileConfig::default(),
            agents: Vec::new(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl ArenaConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// Structural checks that do not need agents.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.episode.validate()?;
        self.profiles.validate()?;
        if self.periods == 0 {
            return Err(ConfigError::NotPositive { field: "periods" });
        }
        if self.top_k == 0 {
            return Err(ConfigError::NotPositive { field: "top_k" });
        }
        let v = &self.generator.values;
        let ok = |r: (f64, f64)| r.0 > 0.0 && r.0 <= r.1 && r.1 <= 1.0;
        if !ok(v.ctr_range) || !ok(v.cvr_range) {
            return Err(ConfigError::Invalid("ctr_range and cvr_range must satisfy 0 < lo <= hi <= 1".into()));
        }
        if !(v.user_sigma >= 0.0 && v.advertiser_sigma >= 0.0 && v.noise_scale >= 0.0) {
            return Err(ConfigError::Invalid("value model spreads must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&v.curve_amplitude) {
            return Err(ConfigError::Invalid("curve_amplitude must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// One strategy per agent. An empty `[[agents]]` list means the default
    /// 16/16/16 suite.
    pub fn suite(&self) -> Result<Vec<StrategySpec>, ConfigError> {
        let groups = if self.agents.is_empty() {
            default_suite()
        } else {
            self.agents.iter().map(|g| Ok((g.spec()?, g.count))).collect::<Result<Vec<_>, ConfigError>>()?
        };
        let suite = expand_groups(&groups);
        if suite.len() != self.episode.num_agents {
            return Err(ConfigError::Invalid(format!(
                "agent groups add up to {} agents, episode.num_agents is {}",
                suite.len(),
                self.episode.num_agents
            )));
        }
        Ok(suite)
    }
}

pub fn load_config(path: &Path) -> Result<ArenaConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    ArenaConfig::from_toml(&text)
}
