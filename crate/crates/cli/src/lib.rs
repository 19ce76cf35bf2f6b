//! Experiment runner for `hzrl-core`: runs the learners over horizon and
//! seed grids, scores them exactly, runs the checker corpora and summarizes
//! result tables. All output is CSV with rows in a fixed order.

pub mod config;
pub mod experiment;
pub mod report;

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{parse_u64_list, Algo, ConfigFile, ExperimentConfig, MdpSource};
use hzrl_core::verify::{run_corpus, CheckReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] hzrl_core::Error),
    #[error("{failures} of {total} checks failed")]
    Verification { failures: usize, total: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// 2 config, 3 budget, 4 failed checks, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Core(hzrl_core::Error::Argument(_)) => 2,
            HarnessError::Core(hzrl_core::Error::Budget { .. }) => 3,
            HarnessError::Verification { .. } => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hzrl", about = "Horizon-free tabular RL experiments and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a learner over every (horizon, seed) cell and write a CSV table.
    Run(RunArgs),
    /// Run a checker corpus and write one CSV row per check.
    Verify(VerifyArgs),
    /// Summarize a result table per horizon.
    Report(ReportArgs),
    /// Write the samples the pessimistic learner collects for one cell.
    DumpDataset(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML experiment config; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model file or generator name.
    #[arg(long)]
    pub mdp: Option<String>,
    /// pessimistic, generative or oracle-only.
    #[arg(long)]
    pub algo: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Multiplier on the theoretical sample counts.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Seeds as `1,2,3` or `0..100`.
    #[arg(long)]
    pub seed: Option<String>,
    /// Horizons as `8,64,512`.
    #[arg(long)]
    pub horizons: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub budget_episodes: Option<u64>,
    #[arg(long)]
    pub budget_queries: Option<u64>,
    /// Estimate quantiles from the collected lists instead of a separate phase.
    #[arg(long)]
    pub reuse_phase_samples: bool,
    /// Quantile percentile override.
    #[arg(long)]
    pub eps_est: Option<f64>,
    /// Fixed generative samples per state-action pair.
    #[arg(long)]
    pub samples_per_pair: Option<u64>,
    /// Directory for per-cell collected datasets (pessimistic only).
    #[arg(long)]
    pub dump_dataset: Option<PathBuf>,
    /// Fill the runtime column.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// lemmas-deterministic, concentration, estimators or empty.
    #[arg(long, default_value = "lemmas-deterministic")]
    pub corpus: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Result table written by `run`.
    pub table: PathBuf,
    /// Also write the summary as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            ConfigFile::load(path)?.apply(&mut cfg, path.parent())?;
        }
        if let Some(m) = &self.mdp {
            cfg.mdp = MdpSource::parse(m)?;
        }
        if let Some(a) = &self.algo {
            cfg.algo = Algo::parse(a)?;
        }
        if let Some(s) = &self.seed {
            cfg.seeds = parse_u64_list(s)?;
        }
        if let Some(h) = &self.horizons {
            cfg.horizons = parse_u64_list(h)?.into_iter().map(|x| x as usize).collect();
        }
        macro_rules! over {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        over!(epsilon, delta, scale);
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if let Some(v) = self.budget_episodes {
            cfg.budget.max_episodes = v;
        }
        if let Some(v) = self.budget_queries {
            cfg.budget.max_queries = v;
        }
        cfg.reuse_phase_samples |= self.reuse_phase_samples;
        cfg.timing |= self.timing;
        if self.eps_est.is_some() {
            cfg.eps_est = self.eps_est;
        }
        if self.samples_per_pair.is_some() {
            cfg.samples_per_pair = self.samples_per_pair;
        }
        if self.dump_dataset.is_some() {
            cfg.dump_dataset = self.dump_dataset.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

#[derive(serde::Serialize)]
struct CheckRow<'a> {
    lemma_id: &'a str,
    instance_id: &'a str,
    hypothesis_ok: bool,
    lhs: f64,
    rhs: f64,
    slack: f64,
    pass: bool,
}

pub fn write_checks(reports: &[CheckReport], out: impl Write) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lemma_id", "instance_id", "hypothesis_ok", "lhs", "rhs", "slack", "pass"])?;
    for r in reports {
        w.serialize(CheckRow {
            lemma_id: r.lemma,
            instance_id: &r.instance,
            hypothesis_ok: r.hypothesis_ok,
            lhs: r.lhs,
            rhs: r.rhs,
            slack: r.slack,
            pass: r.pass,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), HarnessError> {
    match &cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let rows = experiment::run_experiment(&cfg)?;
            experiment::write_rows(&rows, sink(cfg.out.as_deref())?)
        }
        Command::Verify(args) => {
            let reports = run_corpus(&args.corpus, args.seed).map_err(|e| match e {
                hzrl_core::Error::Argument(m) => HarnessError::Config(m),
                other => other.into(),
            })?;
            write_checks(&reports, sink(args.out.as_deref())?)?;
            let failures = reports.iter().filter(|r| r.is_failure()).count();
            if failures > 0 {
                return Err(HarnessError::Verification { failures, total: reports.len() });
            }
            Ok(())
        }
        Command::Report(args) => {
            let rows = experiment::read_rows(&args.table)?;
            let summary = report::summarize(&rows);
            print!("{}", report::render_text(&summary));
            if let Some(p) = &args.out {
                experiment::write_rows(&summary, File::create(p)?)?;
            }
            Ok(())
        }
        Command::DumpDataset(args) => {
            let cfg = args.resolve()?;
            let out = cfg.out.clone().ok_or_else(|| HarnessError::Config("dump-dataset needs --out".into()))?;
            let mdp = cfg.mdp.build(cfg.horizons[0])?;
            experiment::dump_dataset(&cfg, &mdp, cfg.seeds[0], &out)
        }
    }
}
