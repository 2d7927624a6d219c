//! File-level workflows behind the command line: dataset generation,
//! logged runs, evaluation reports and log summaries.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use thiserror::Error;

use crate::agents::{AgentContext, BiddingStrategy};
use crate::config::ArenaConfig;
use crate::domain::{AdOpportunity, AdvertiserProfile, ConfigError};
use crate::io::records::{RecordError, RecordReader, RecordWriter};
use crate::io::shards::{read_manifest, shard_name, write_manifest, ManifestEntry, ShardFile, MANIFEST_FILE};
use crate::io::summary::{write_summary_tables, Summarizer, Summary};
use crate::opportunity::{load_dataset, DatasetWriter, ParametricSource, SourceError};
use crate::rng::{derive_seed, Stream};
use crate::runner::suite::{build_profiles, build_strategy, StrategySpec};
use crate::runner::{run_episode, EpisodeResult, RunError};

pub const PROFILES_FILE: &str = "profiles.tsv";
pub const RESULTS_FILE: &str = "results.tsv";
pub const REPORT_FILE: &str = "report.tsv";
pub const ROUNDS_FILE: &str = "rounds.tsv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Log { path: PathBuf, source: RecordError },
    #[error("{path}: {source}")]
    Dataset { path: PathBuf, source: SourceError },
    #[error("no impression logs found in {0}")]
    NoLogs(PathBuf),
    #[error("dataset {dir} has {found} shards, {needed} periods requested")]
    MissingShards { dir: PathBuf, found: usize, needed: u32 },
}

impl PipelineError {
    /// 2 for configuration and validation problems, 3 when an external agent
    /// cannot be started, 4 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        fn record_code(e: &RecordError) -> i32 {
            match e {
                RecordError::Io(_) | RecordError::Sink { .. } => 4,
                _ => 2,
            }
        }
        fn source_code(e: &SourceError) -> i32 {
            match e {
                SourceError::Io(_) => 4,
                _ => 2,
            }
        }
        match self {
            PipelineError::Config(_) | PipelineError::NoLogs(_) | PipelineError::MissingShards { .. } => 2,
            PipelineError::Io { .. } => 4,
            PipelineError::Log { source, .. } => record_code(source),
            PipelineError::Dataset { source, .. } => source_code(source),
            PipelineError::Run(e) => match e {
                RunError::AgentStartup { .. } => 3,
                RunError::Record(r) => record_code(r),
                RunError::Source(s) => source_code(s),
                _ => 2,
            },
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// The configured profile slots with strategy kinds taken from `suite`.
pub fn configured_profiles(config: &ArenaConfig, suite: &[StrategySpec]) -> Vec<AdvertiserProfile> {
    let mut profiles = build_profiles(&config.episode, &config.profiles, config.episode.seed);
    for (p, s) in profiles.iter_mut().zip(suite) {
        p.agent_kind = s.kind();
    }
    profiles
}

pub fn profiles_tsv(profiles: &[AdvertiserProfile]) -> String {
    let mut s = String::from("advertiserIndex\tadvertiserCategoryIndex\tbudget\tCPAConstraint\tagentKind\n");
    for p in profiles {
        writeln!(s, "{}\t{}\t{:.2}\t{:.2}\t{}", p.advertiser_index, p.category_index, p.budget, p.cpa_constraint, p.agent_kind.label())
            .unwrap();
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Writes one opportunity shard per period plus a manifest and the profile
/// table. Returns the manifest entries.
pub fn generate_dataset(config: &ArenaConfig, out: &Path) -> Result<Vec<ManifestEntry>, PipelineError> {
    config.validate()?;
    let suite = config.suite()?;
    create_dir(out)?;
    let profiles = configured_profiles(config, &suite);
    let mut entries = Vec::with_capacity(config.periods as usize);
    for period in 0..config.periods {
        let name = shard_name(period);
        let path = out.join(&name);
        let shard = ShardFile::create(out, &name).map_err(io_err(&path))?;
        let mut writer = DatasetWriter::new(BufWriter::new(shard), profiles.len(), config.generator.with_features)
            .map_err(io_err(&path))?;
        for batch in ParametricSource::new(&config.episode, &config.generator, &profiles, period) {
            let batch = batch.map_err(|source| PipelineError::Dataset { path: path.clone(), source })?;
            writer.write_step(&batch).map_err(io_err(&path))?;
        }
        let (rows, buffered) = writer.finish().map_err(io_err(&path))?;
        let shard = buffered.into_inner().map_err(|e| PipelineError::Io { path: path.clone(), source: e.into_error() })?;
        let entry = shard.finish(rows).map_err(io_err(&path))?;
        info!("wrote {} ({} rows)", entry.path, entry.rows);
        entries.push(entry);
    }
    write_manifest(out, &entries).map_err(io_err(&out.join(MANIFEST_FILE)))?;
    write_text(&out.join(PROFILES_FILE), &profiles_tsv(&profiles))?;
    Ok(entries)
}

type StepSource = Box<dyn Iterator<Item = Result<Vec<AdOpportunity>, SourceError>>>;

fn period_source(config: &ArenaConfig, profiles: &[AdvertiserProfile], period: u32) -> Result<StepSource, PipelineError> {
    match &config.dataset {
        None => Ok(Box::new(ParametricSource::new(&config.episode, &config.generator, profiles, period))),
        Some(dir) => {
            let entries = read_manifest(dir).map_err(io_err(&dir.join(MANIFEST_FILE)))?;
            let entry = entries.get(period as usize).ok_or_else(|| PipelineError::MissingShards {
                dir: dir.clone(),
                found: entries.len(),
                needed: config.periods,
            })?;
            let path = dir.join(&entry.path);
            let reader = load_dataset(&path, config.episode.num_steps)
                .map_err(|source| PipelineError::Dataset { path: path.clone(), source })?;
            if reader.num_agents() != profiles.len() {
                return Err(ConfigError::Invalid(format!(
                    "{} carries values for {} agents, the configuration has {}",
                    path.display(),
                    reader.num_agents(),
                    profiles.len()
                ))
                .into());
            }
            Ok(Box::new(reader))
        }
    }
}

fn build_strategies(
    config: &ArenaConfig,
    suite: &[StrategySpec],
    profiles: &[AdvertiserProfile],
) -> Result<Vec<Box<dyn BiddingStrategy>>, PipelineError> {
    profiles
        .iter()
        .zip(suite)
        .enumerate()
        .map(|(k, (p, spec))| {
            let context = AgentContext {
                agent_index: k,
                category_index: p.category_index,
                budget: p.budget,
                cpa_constraint: p.cpa_constraint,
                num_steps: config.episode.num_steps,
            };
            build_strategy(spec, &context, derive_seed(config.episode.seed, Stream::Agent, k as u64))
                .map_err(|source| RunError::AgentStartup { agent: k, source }.into())
        })
        .collect()
}

pub fn results_tsv(results: &[EpisodeResult]) -> String {
    let mut s = String::from(
        "period\tadvertiserIndex\tstrategy\tcategory\tbudget\tCPAConstraint\ttotalValue\ttotalCost\tcpa\tpenalty\tscore\twins\tvoided\tfaulted\tendedStep\n",
    );
    for r in results {
        for a in &r.agents {
            let ended = a.ended_step.map_or_else(|| "-".to_string(), |t| t.to_string());
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{:.2}\t{:.2}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.period,
                a.advertiser_index,
                a.label,
                a.category_index,
                a.budget,
                a.cpa_constraint,
                a.total_value,
                a.total_cost,
                a.cpa,
                a.penalty,
                a.score,
                a.wins,
                a.voided,
                a.faulted as u8,
                ended
            )
            .unwrap();
        }
    }
    s
}

#[derive(Debug)]
pub struct RunOutput {
    pub results: Vec<EpisodeResult>,
    /// Impression log shards; empty when no output directory was given.
    pub manifest: Vec<ManifestEntry>,
}

/// Runs `config.periods` episodes with `suite[k]` bidding for profile slot
/// `k`. With `out`, writes per-period impression logs, a manifest, the
/// profile table and a results table.
pub fn run_periods(config: &ArenaConfig, suite: &[StrategySpec], out: Option<&Path>) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    if suite.len() != config.episode.num_agents {
        return Err(ConfigError::Invalid(format!(
            "{} strategies for {} agents",
            suite.len(),
            config.episode.num_agents
        ))
        .into());
    }
    if let Some(dir) = out {
        create_dir(dir)?;
    }
    let profiles = configured_profiles(config, suite);
    let mut results = Vec::with_capacity(config.periods as usize);
    let mut manifest = Vec::new();
    for period in 0..config.periods {
        let strategies = build_strategies(config, suite, &profiles)?;
        let source = period_source(config, &profiles, period)?;
        match out {
            None => results.push(run_episode(&config.episode, &profiles, strategies, source, period, None)?),
            Some(dir) => {
                let name = shard_name(period);
                let path = dir.join(&name);
                let shard = ShardFile::create(dir, &name).map_err(io_err(&path))?;
                let mut writer = RecordWriter::new(BufWriter::new(shard), config.top_k)
                    .map_err(|source| PipelineError::Log { path: path.clone(), source })?;
                results.push(run_episode(&config.episode, &profiles, strategies, source, period, Some(&mut writer))?);
                let (rows, buffered) =
                    writer.finish().map_err(|source| PipelineError::Log { path: path.clone(), source })?;
                let shard =
                    buffered.into_inner().map_err(|e| PipelineError::Io { path: path.clone(), source: e.into_error() })?;
                manifest.push(shard.finish(rows).map_err(io_err(&path))?);
            }
        }
        info!("period {period} done");
    }
    if let Some(dir) = out {
        write_manifest(dir, &manifest).map_err(io_err(&dir.join(MANIFEST_FILE)))?;
        write_text(&dir.join(PROFILES_FILE), &profiles_tsv(&profiles))?;
        write_text(&dir.join(RESULTS_FILE), &results_tsv(&results))?;
    }
    Ok(RunOutput { results, manifest })
}

/// Log shards in a directory: the manifest's entries when present,
/// otherwise every `period_*.tsv` in name order.
pub fn log_shards(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if dir.join(MANIFEST_FILE).exists() {
        let entries = read_manifest(dir).map_err(io_err(&dir.join(MANIFEST_FILE)))?;
        return Ok(entries.into_iter().map(|e| dir.join(e.path)).collect());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("period_") && n.ends_with(".tsv"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Reads every log shard in `dir` and writes the summary tables to `out`.
pub fn summarize_logs(dir: &Path, out: &Path, num_slots: usize) -> Result<Summary, PipelineError> {
    let shards = log_shards(dir)?;
    if shards.is_empty() {
        return Err(PipelineError::NoLogs(dir.to_path_buf()));
    }
    let mut summarizer = Summarizer::new();
    for path in &shards {
        let file = fs::File::open(path).map_err(io_err(path))?;
        let reader = RecordReader::new(BufReader::new(file), num_slots)
            .map_err(|source| PipelineError::Log { path: path.clone(), source })?;
        for record in reader {
            let record = record.map_err(|source| PipelineError::Log { path: path.clone(), source })?;
            summarizer.push(&record);
        }
    }
    let summary = summarizer.finish();
    create_dir(out)?;
    write_summary_tables(&summary, out).map_err(io_err(out))?;
    Ok(summary)
}

/// Writes `text` to stdout-like sinks, mapping failures to exit code 4.
pub fn write_out<W: Write>(mut sink: W, text: &str) -> Result<(), PipelineError> {
    sink.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}
