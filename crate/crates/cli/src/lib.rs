//! Run orchestration for promptlab experiments.

pub mod commands;
pub mod config;
pub mod error;
pub mod runtime;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::runtime::Context;

#[derive(Debug, Parser)]
#[command(name = "promptlab", version, about = "Prompting, demonstration selection and distractor ranking experiments")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Single seed; replaces the configured seed list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `mock` or the base url of a gateway server.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Check selection invariants on the run's own output.
    #[arg(long, global = true)]
    pub verify: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    ZeroShot,
    Icl,
    LabeldescBuild {
        #[arg(long)]
        dataset: Option<String>,
    },
    DistractorExtract,
    DistractorTrain,
    DistractorRank,
    Analyze,
    Bootstrap,
}

impl Cli {
    /// Loads the config file, if any, and applies flag overrides.
    pub fn context(&self) -> Result<Context, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(b) = &self.backend {
            cfg.backend = b.clone();
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        let mut ctx = Context::new(cfg);
        ctx.cache_flag = self.cache_dir.clone();
        ctx.verify = self.verify;
        Ok(ctx)
    }
}

pub fn run_command(ctx: &Context, command: &Command) -> Result<String, CliError> {
    match command {
        Command::ZeroShot => commands::zero_shot::run(ctx),
        Command::Icl => commands::icl::run(ctx),
        Command::LabeldescBuild { dataset } => commands::labeldesc::run(ctx, dataset.as_deref()),
        Command::DistractorExtract => commands::distractor::extract(ctx),
        Command::DistractorTrain => commands::distractor::train(ctx),
        Command::DistractorRank => commands::distractor::rank(ctx),
        Command::Analyze => commands::analyze::run(ctx),
        Command::Bootstrap => commands::bootstrap::run(ctx),
    }
}

pub fn run(cli: &Cli) -> Result<String, CliError> {
    let ctx = cli.context()?;
    run_command(&ctx, &cli.command)
}
