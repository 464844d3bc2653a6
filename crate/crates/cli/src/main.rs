//! `ctaug`: prepare, augment, compose, evaluate and test CT lesion
//! segmentation experiments from one reproducible configuration.

mod commands;
mod config;
mod exit;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::exit::Invalid;

#[derive(Debug, Parser)]
#[command(name = "ctaug", version, about = "Deterministic augmentation toolkit for CT lesion segmentation")]
struct Cli {
    /// JSON or TOML run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter, split, fold and balance datasets into manifests.
    Prepare(commands::prepare::Args),
    /// Apply a transform plan as online batches or offline copies.
    Augment(commands::augment::Args),
    /// Expand a training manifest with lesion composites.
    Compose(commands::compose::Args),
    /// Score predictions against ground truth; optional Fréchet distance.
    Eval(commands::eval::Args),
    /// One-sided Wilcoxon tests over fold scores.
    Stats(commands::stats::Args),
    /// Aggregate evaluation records into summary and fold-score tables.
    Report(commands::report::Args),
    /// Write a synthetic data root for demos and tests.
    Fixture(commands::fixture::Args),
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(d) = &cli.data_root {
        cfg.data_root = Some(d.clone());
    }
    if let Some(o) = &cli.out {
        cfg.output_root = Some(o.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Prepare(a) => a.apply_overrides(&mut cfg),
        Command::Compose(a) => a.apply_overrides(&mut cfg),
        Command::Stats(a) => a.apply_overrides(&mut cfg),
        _ => {}
    }
    cfg.validate()?;
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Invalid(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Prepare(a) => commands::prepare::run(&cfg, a),
        Command::Augment(a) => commands::augment::run(&cfg, a),
        Command::Compose(a) => commands::compose::run(&cfg, a),
        Command::Eval(a) => commands::eval::run(&cfg, a),
        Command::Stats(a) => commands::stats::run(&cfg, a),
        Command::Report(a) => commands::report::run(&cfg, a),
        Command::Fixture(a) => commands::fixture::run(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::VALIDATION } else { exit::OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}
