use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use auction_arena::config::{parse_agent_shorthand, AgentGroup, AgentsFile, Transport};
use auction_arena::pipeline::{self, PipelineError, REPORT_FILE, ROUNDS_FILE};
use auction_arena::{evaluate, ArenaConfig, ConfigError, EpisodeResult};
use clap::{Args, Parser, Subcommand};
use log::info;

const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

/// Multi-agent ad auction simulator.
#[derive(Parser)]
#[command(name = "auction-arena", version)]
struct Cli {
    /// Caps worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; the bundled desk-scale default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AgentArgs {
    /// Agents file (TOML with [[agents]]) or shorthand like `abid:16,pid:16,online_lp:16`.
    #[arg(long)]
    agents: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write an opportunity dataset with one shard per period.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run episodes and write impression logs and a results table.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        agents: AgentArgs,
        #[arg(long)]
        out: PathBuf,
        /// Binds profile slot SLOT to an agent speaking the line protocol on
        /// this process's stdin and stdout.
        #[arg(long, value_name = "SLOT")]
        stdio_agent: Option<usize>,
    },
    /// Run the suite over permuted rounds and report normalized scores.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        agents: AgentArgs,
        #[arg(long)]
        rounds: Option<usize>,
        /// Directory for report.tsv and rounds.tsv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize impression logs into category and step tables.
    Summarize {
        /// Directory of impression log shards.
        logs: PathBuf,
        /// Where the tables go; the log directory when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Configuration supplying the slot count.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(path: Option<&Path>) -> Result<ArenaConfig, PipelineError> {
    match path {
        None => Ok(ArenaConfig::from_toml(DEFAULT_CONFIG)?),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| PipelineError::Io { path: p.to_path_buf(), source })?;
            ArenaConfig::from_toml(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", p.display())).into())
        }
    }
}

fn agent_groups(spec: &str) -> Result<Vec<AgentGroup>, PipelineError> {
    let path = Path::new(spec);
    if !path.is_file() {
        return Ok(parse_agent_shorthand(spec)?);
    }
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
    let file: AgentsFile =
        toml::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    Ok(file.agents)
}

fn apply(config: &mut ArenaConfig, common: &Common, agents: Option<&AgentArgs>) -> Result<(), PipelineError> {
    if let Some(seed) = common.seed {
        config.episode.seed = seed;
        config.evaluation.master_seed = seed;
    }
    if let Some(spec) = agents.and_then(|a| a.agents.as_deref()) {
        config.agents = agent_groups(spec)?;
    }
    config.validate()?;
    Ok(())
}

fn stdout_write(text: &str) -> Result<(), PipelineError> {
    pipeline::write_out(io::stdout().lock(), text)
}

fn results_table(results: &[EpisodeResult]) -> String {
    let mut s = format!("{:<7} {:>5} {:<9} {:>10} {:>12} {:>12} {:>8}\n", "period", "agent", "strategy", "budget", "value", "cost", "faulted");
    for r in results {
        for a in &r.agents {
            writeln!(
                s,
                "{:<7} {:>5} {:<9} {:>10.2} {:>12.4} {:>12.4} {:>8}",
                r.period, a.advertiser_index, a.label, a.budget, a.total_value, a.total_cost, a.faulted
            )
            .unwrap();
        }
    }
    s
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Generate { common, out } => {
            let mut config = load(common.config.as_deref())?;
            apply(&mut config, &common, None)?;
            let entries = pipeline::generate_dataset(&config, &out)?;
            let mut s = String::new();
            for e in &entries {
                writeln!(s, "{}\t{} rows", e.path, e.rows).unwrap();
            }
            writeln!(s, "seed {}", config.episode.seed).unwrap();
            stdout_write(&s)
        }
        Command::Run { common, agents, out, stdio_agent } => {
            let mut config = load(common.config.as_deref())?;
            apply(&mut config, &common, Some(&agents))?;
            let mut suite = config.suite()?;
            if let Some(slot) = stdio_agent {
                let n = suite.len();
                let target = suite.get_mut(slot).ok_or_else(|| {
                    ConfigError::Invalid(format!("--stdio-agent {slot} is out of range for {n} agents"))
                })?;
                let group = AgentGroup { transport: Some(Transport::Stdio), ..AgentGroup::builtin("external", 1) };
                *target = group.spec()?;
            }
            let output = pipeline::run_periods(&config, &suite, Some(&out))?;
            let table = results_table(&output.results);
            // With a stdio-bound agent stdout carries the protocol.
            if stdio_agent.is_some() {
                eprint!("{table}");
                Ok(())
            } else {
                stdout_write(&table)
            }
        }
        Command::Evaluate { common, agents, rounds, out } => {
            let mut config = load(common.config.as_deref())?;
            if let Some(r) = rounds {
                config.evaluation.rounds = r;
            }
            apply(&mut config, &common, Some(&agents))?;
            if config.evaluation.rounds == 0 {
                return Err(ConfigError::NotPositive { field: "rounds" }.into());
            }
            let suite = config.suite()?;
            let report = evaluate(&config.episode, &config.generator, &config.profiles, &suite, &config.evaluation)?;
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(|source| PipelineError::Io { path: dir.clone(), source })?;
                for (name, text) in [(REPORT_FILE, report.to_tsv()), (ROUNDS_FILE, report.rounds_tsv())] {
                    let path = dir.join(name);
                    fs::write(&path, text).map_err(|source| PipelineError::Io { path, source })?;
                }
            }
            stdout_write(&report.render())
        }
        Command::Summarize { logs, out, config } => {
            let config = load(config.as_deref())?;
            let out = out.unwrap_or_else(|| logs.clone());
            let summary = pipeline::summarize_logs(&logs, &out, config.episode.num_slots)?;
            let mut s = format!(
                "{} records, {} opportunities, {} category-step rows\n",
                summary.records,
                summary.opportunities,
                summary.category_step.len()
            );
            if summary.degenerate {
                s.push_str("degenerate: too little data for correlations\n");
            }
            stdout_write(&s)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AUCTION_ARENA_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        info!("using {n} worker threads");
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = io::stdout().flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
