//! Command-line runner for the `mrsim-core` experiments: config loading,
//! parallel run orchestration and CSV/JSON output.

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};
use mrsim_core::scenario::cooploc::{self, sweep_cells, CoopLocConfig, CoopLocResult};
use mrsim_core::scenario::overtake::{self, compute_deadline, effective_deadline, reliability_latency, RunOutcome};
use mrsim_core::transport::Protocol;
use rayon::prelude::*;
use serde_json::json;

use config::{ConfigError, RawConfig, ScenarioKind};
use output::{fmt_f64, fmt_opt, OutputDir};

/// Environment variable that overrides `--out`.
pub const OUT_ENV: &str = "MRSIM_OUT";
const DEFAULT_OUT: &str = "mrsim-out";

pub const SERIES_HEADER: [&str; 7] = ["seed", "protocol", "epsilon", "delay_mode", "estimator", "t", "err"];
pub const SUMMARY_HEADER: [&str; 9] = [
    "seed",
    "protocol",
    "epsilon",
    "delay_mode",
    "estimator",
    "tail_mean_err",
    "mean_inorder_delay",
    "delivery_ratio",
    "throughput",
];
pub const RUNS_HEADER: [&str; 7] = ["seed", "run_id", "protocol", "t25_slot", "abort_slot", "outcome", "deadline_slot"];
pub const CDF_HEADER: [&str; 3] = ["protocol", "t", "cdf"];
pub const DEADLINE_HEADER: [&str; 2] = ["candidate_slot", "safe"];

/// Protocols compared by the overtaking Monte Carlo.
pub const OVERTAKE_PROTOCOLS: [Protocol; 2] = [Protocol::SrArq, Protocol::AcRlnc];

#[derive(Debug, Parser)]
#[command(name = "mrsim", version, about = "Multi-robot estimation over lossy, delayed transports")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cooperative localization experiments.
    Cooploc {
        #[command(subcommand)]
        action: CoopLocAction,
    },
    /// Three-vehicle overtaking experiments.
    Overtake {
        #[command(subcommand)]
        action: OvertakeAction,
    },
    /// Check a config file without running anything.
    Validate {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum CoopLocAction {
    /// One run with the configured protocol, erasure rate and estimator.
    Run(Common),
    /// One run per (epsilon, protocol) cell of the sweep grid.
    Sweep(Common),
}

#[derive(Debug, Subcommand)]
enum OvertakeAction {
    /// Scan abort candidates and report the latest safe one.
    Deadline(Common),
    /// Reliability-latency estimate over independent channel realizations.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        /// Number of runs per protocol.
        #[arg(long, value_name = "N")]
        runs: Option<u32>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Config file; unset keys take the scenario defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding `scenario.seed`.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory (the MRSIM_OUT environment variable takes precedence).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, value_name = "K", value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    MissingConfig { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] mrsim_core::scenario::ScenarioError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingConfig { .. } => 2,
            _ => 1,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::MissingConfig { .. } = e {
                eprintln!("{}", Cli::command().render_usage());
            }
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Cooploc { action: CoopLocAction::Run(c) } => cooploc_cmd(&c, false),
        Command::Cooploc { action: CoopLocAction::Sweep(c) } => cooploc_cmd(&c, true),
        Command::Overtake { action: OvertakeAction::Deadline(c) } => deadline_cmd(&c),
        Command::Overtake { action: OvertakeAction::Montecarlo { common, runs } } => montecarlo_cmd(&common, runs),
        Command::Validate { config } => validate_cmd(&config),
    }
}

fn load(path: Option<&PathBuf>) -> Result<RawConfig, CliError> {
    match path {
        None => Ok(RawConfig::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|source| CliError::MissingConfig { path: p.clone(), source })?;
            Ok(RawConfig::parse(&text)?)
        }
    }
}

fn out_dir(c: &Common) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => c.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    }
}

fn pool(c: &Common) -> Result<rayon::ThreadPool, CliError> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(c.jobs.unwrap_or(0) as usize).build()?)
}

fn validate_cmd(path: &PathBuf) -> Result<(), CliError> {
    let raw = load(Some(path))?;
    let kind = match raw.kind()? {
        Some(k) => k,
        None => match (raw.cooploc(), raw.overtake()) {
            (Ok(_), _) => ScenarioKind::CoopLoc,
            (_, Ok(_)) => ScenarioKind::Overtake,
            (Err(e), _) => return Err(e.into()),
        },
    };
    match kind {
        ScenarioKind::CoopLoc => {
            raw.cooploc()?;
        }
        ScenarioKind::Overtake => {
            raw.overtake()?;
        }
    }
    println!("{}: valid {} config", path.display(), kind.name());
    Ok(())
}

/// Sort key for cooploc rows: protocol, epsilon, delay mode, estimator.
fn cell_key(cfg: &CoopLocConfig) -> (u64, &'static str, u64, &'static str, &'static str) {
    // Non-negative floats order like their bit patterns.
    (
        cfg.seed,
        cooploc::protocol_name(cfg.protocol),
        cfg.epsilon.to_bits(),
        cfg.delay_mode.name(),
        cooploc::estimator_name(cfg.estimator),
    )
}

fn cell_prefix(cfg: &CoopLocConfig) -> Vec<String> {
    vec![
        cfg.seed.to_string(),
        cooploc::protocol_name(cfg.protocol).to_string(),
        fmt_f64(cfg.epsilon),
        cfg.delay_mode.name().to_string(),
        cooploc::estimator_name(cfg.estimator).to_string(),
    ]
}

/// Series and summary rows for finished cells, sorted by cell then slot.
pub fn cooploc_rows(cells: &[(CoopLocConfig, CoopLocResult)]) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by_key(|&i| cell_key(&cells[i].0));
    let mut series = Vec::new();
    let mut summary = Vec::new();
    for i in order {
        let (cfg, res) = &cells[i];
        let prefix = cell_prefix(cfg);
        for (t, e) in res.err.iter().enumerate() {
            let mut row = prefix.clone();
            row.push(t.to_string());
            row.push(fmt_f64(*e));
            series.push(row);
        }
        let mut row = prefix;
        row.push(fmt_f64(res.tail_mean_err));
        let m = res.transport.as_ref();
        row.push(fmt_opt(m.map(|m| fmt_f64(m.mean_inorder_delay))));
        row.push(fmt_opt(m.map(|m| fmt_f64(m.delivery_ratio))));
        row.push(fmt_opt(m.map(|m| fmt_f64(m.throughput))));
        summary.push(row);
    }
    (series, summary)
}

fn cooploc_cmd(c: &Common, sweep: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let mut setup = load(c.config.as_ref())?.cooploc()?;
    if let Some(s) = c.seed {
        setup.cfg.seed = s;
    }
    let cells =
        if sweep { sweep_cells(&setup.cfg, &setup.epsilons, &setup.protocols) } else { vec![setup.cfg.clone()] };
    let results: Vec<CoopLocResult> =
        pool(c)?.install(|| cells.par_iter().map(cooploc::run).collect::<Result<_, _>>())?;
    let cells: Vec<(CoopLocConfig, CoopLocResult)> = cells.into_iter().zip(results).collect();
    let (series, summary) = cooploc_rows(&cells);

    let mut out = OutputDir::create(out_dir(c))?;
    out.csv("cooploc_series.csv", &SERIES_HEADER, &series)?;
    out.csv("cooploc_summary.csv", &SUMMARY_HEADER, &summary)?;
    println!("{}", SUMMARY_HEADER.join(","));
    for row in &summary {
        println!("{}", row.join(","));
    }
    let echo = config::echo_cooploc(&setup);
    let hash = config::config_hash(&echo);
    let command = if sweep { "cooploc sweep" } else { "cooploc run" };
    out.finish(command, &echo, &hash, json!({ "cells": summary.len() }), start.elapsed())?;
    Ok(())
}

fn deadline_cmd(c: &Common) -> Result<(), CliError> {
    let start = Instant::now();
    let mut setup = load(c.config.as_ref())?.overtake()?;
    if let Some(s) = c.seed {
        setup.cfg.seed = s;
    }
    let scan = compute_deadline(&setup.cfg)?;
    let effective = effective_deadline(&setup.cfg)?;
    let rows: Vec<Vec<String>> =
        scan.safe.iter().enumerate().map(|(k, s)| vec![k.to_string(), s.to_string()]).collect();

    let mut out = OutputDir::create(out_dir(c))?;
    out.csv("overtake_deadline.csv", &DEADLINE_HEADER, &rows)?;
    println!("computed_deadline={} monotone={} effective_deadline={}", scan.deadline, scan.is_monotone(), effective);
    let echo = config::echo_overtake(&setup);
    let hash = config::config_hash(&echo);
    let results = json!({
        "computed_deadline": scan.deadline,
        "monotone": scan.is_monotone(),
        "effective_deadline": effective,
    });
    out.finish("overtake deadline", &echo, &hash, results, start.elapsed())?;
    Ok(())
}

/// Runs every (protocol, run id) pair; results sorted by protocol name then run id.
pub fn montecarlo(
    cfg: &overtake::OvertakeConfig,
    runs: u32,
    pool: &rayon::ThreadPool,
) -> Result<Vec<RunOutcome>, CliError> {
    let tasks: Vec<(Protocol, u32)> = OVERTAKE_PROTOCOLS.iter().flat_map(|&p| (0..runs).map(move |r| (p, r))).collect();
    let mut outs: Vec<RunOutcome> =
        pool.install(|| tasks.par_iter().map(|&(p, r)| overtake::run_once(cfg, p, r)).collect::<Result<_, _>>())?;
    outs.sort_by_key(|o| (o.protocol.name(), o.run_id));
    Ok(outs)
}

fn montecarlo_cmd(c: &Common, runs: Option<u32>) -> Result<(), CliError> {
    let start = Instant::now();
    let mut setup = load(c.config.as_ref())?.overtake()?;
    if let Some(s) = c.seed {
        setup.cfg.seed = s;
    }
    if let Some(r) = runs {
        setup.runs = r;
    }
    config::validate_overtake(&setup)?;
    let cfg = &setup.cfg;
    let deadline = effective_deadline(cfg)?;
    let outs = montecarlo(cfg, setup.runs, &pool(c)?)?;

    let runs_rows: Vec<Vec<String>> = outs
        .iter()
        .map(|o| {
            vec![
                cfg.seed.to_string(),
                o.run_id.to_string(),
                o.protocol.name().to_string(),
                fmt_opt(o.t25),
                fmt_opt(o.abort_slot),
                o.outcome.name().to_string(),
                deadline.to_string(),
            ]
        })
        .collect();
    let mut protocols: Vec<Protocol> = OVERTAKE_PROTOCOLS.to_vec();
    protocols.sort_by_key(|p| p.name());
    let mut cdf_rows = Vec::new();
    let mut at_deadline = BTreeMap::new();
    let mut outcomes = BTreeMap::new();
    for p in protocols {
        let mine: Vec<&RunOutcome> = outs.iter().filter(|o| o.protocol == p).collect();
        let t25: Vec<Option<u32>> = mine.iter().map(|o| o.t25).collect();
        let cdf = reliability_latency(&t25, cfg.horizon);
        for (t, v) in cdf.iter().enumerate() {
            cdf_rows.push(vec![p.name().to_string(), t.to_string(), fmt_f64(*v)]);
        }
        let p_d = usize::try_from(deadline).ok().and_then(|d| cdf.get(d).copied()).unwrap_or(0.0);
        at_deadline.insert(p.name(), p_d);
        let mut counts = BTreeMap::new();
        for o in &mine {
            *counts.entry(o.outcome.name()).or_insert(0u32) += 1;
        }
        println!("{}: Pr[T25 <= {deadline}] = {}  outcomes {counts:?}", p.name(), fmt_f64(p_d));
        outcomes.insert(p.name(), counts);
    }

    let mut out = OutputDir::create(out_dir(c))?;
    out.csv("overtake_runs.csv", &RUNS_HEADER, &runs_rows)?;
    out.csv("overtake_cdf.csv", &CDF_HEADER, &cdf_rows)?;
    let echo = config::echo_overtake(&setup);
    let hash = config::config_hash(&echo);
    let results = json!({
        "deadline_slot": deadline,
        "pr_t25_by_deadline": at_deadline,
        "outcomes": outcomes,
    });
    out.finish("overtake montecarlo", &echo, &hash, results, start.elapsed())?;
    Ok(())
}
