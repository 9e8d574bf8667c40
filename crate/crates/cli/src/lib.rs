//! Command-line driver: config handling, experiment subcommands and reports.

pub mod commands;
pub mod config;
pub mod output;
pub mod report;
pub mod svg;

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use config::CliConfig;

#[derive(Debug, Parser)]
#[command(name = "oe-lab", version, about = "Outlier Exposure anomaly-detection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat `key = value` config file; omitted keys take their defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set seeds=0,1,2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Parent directory; outputs go to a subdirectory named by the config hash.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

impl RunArgs {
    pub fn config(&self) -> Result<CliConfig> {
        let mut cfg = match &self.config {
            Some(path) => CliConfig::load(path)?,
            None => CliConfig::default(),
        };
        for s in &self.set {
            cfg.apply_override(s)?;
        }
        cfg.apply_env();
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSONL record files.
    pub paths: Vec<PathBuf>,
    /// Also write the table to this file.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// HSC vs BCE decision regions on the 2-D toy scenarios.
    Toy(RunArgs),
    /// One experiment per configured method.
    Bench(RunArgs),
    /// AUC as a function of the number of OE samples.
    SweepOe(RunArgs),
    /// AUC as a function of the number of OE classes.
    SweepDiversity(RunArgs),
    /// AUC under low-/high-pass filtering of all images.
    FilterSweep(RunArgs),
    /// Evolutionary search for the best or worst single OE sample.
    Evolve(RunArgs),
    /// Per-class table from JSONL records.
    Report(ReportArgs),
}

/// Executes a parsed command line and returns what it produced: the output
/// directory for experiments, the rendered table for `report`.
pub fn run(cli: &Cli) -> Result<String> {
    let dir = match &cli.command {
        Command::Toy(a) => commands::cmd_toy(&a.config()?, &a.out)?,
        Command::Bench(a) => commands::cmd_bench(&a.config()?, &a.out)?,
        Command::SweepOe(a) => commands::cmd_sweep_oe(&a.config()?, &a.out)?,
        Command::SweepDiversity(a) => commands::cmd_sweep_diversity(&a.config()?, &a.out)?,
        Command::FilterSweep(a) => commands::cmd_filter_sweep(&a.config()?, &a.out)?,
        Command::Evolve(a) => commands::cmd_evolve(&a.config()?, &a.out)?,
        Command::Report(a) => {
            if a.paths.is_empty() {
                bail!("report needs at least one JSONL file");
            }
            let mut records = Vec::new();
            for p in &a.paths {
                records.extend(report::read_records(p)?);
            }
            let table = report::render_table(&records);
            if let Some(out) = &a.out {
                std::fs::write(out, &table)?;
            }
            return Ok(table);
        }
    };
    Ok(dir.display().to_string())
}
