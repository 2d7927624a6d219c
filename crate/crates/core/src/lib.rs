//! Multi-agent ad auction simulator.
//!
//! Opportunities arrive in `T` steps per delivery period. Each step every
//! agent submits value-proportional bids, each opportunity runs a
//! multi-slot GSP auction with per-slot exposure rates, and settlement
//! charges exposed winners while enforcing hard budgets. Results are scored
//! on the basic task (value won) or the Target CPA task (value times a CPA
//! penalty), and the full impression log can be written as sharded TSV.
//!
//! The auction and scoring primitives are generic over the scalar type
//! ([`num::Real`]); the aliases below fix it to `f64`, which the runner,
//! agents and file formats use throughout.

pub mod agents;
pub mod auction;
pub mod config;
pub mod domain;
pub mod io;
pub mod num;
pub mod opportunity;
pub mod pipeline;
pub mod rng;
pub mod runner;

pub use config::{load_config, ArenaConfig};
pub use domain::{AdOpportunity, AdvertiserProfile, AgentKind, AgentState, ConfigError, EpisodeConfig, MechanismKind, Task};
pub use runner::{evaluate, run_episode, EpisodeResult, EvaluationReport, RunError};

pub type MechanismSpec = auction::MechanismSpec<f64>;
pub type Bid = auction::Bid<f64>;
pub type Winner = auction::Winner<f64>;
pub type Allocation = auction::Allocation<f64>;
pub type AuctionOutcome = auction::AuctionOutcome<f64>;
