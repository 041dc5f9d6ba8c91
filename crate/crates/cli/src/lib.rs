//! Command-line drivers: configuration, convergence studies, time-series
//! runs and projections of reference snapshots.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, parse_file, parse_flags, CaseKind};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "vmsns", version, about = "Structure-preserving 2D Navier-Stokes solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// TGV h- or k-convergence study.
    TgvConverge(RunArgs),
    /// Inviscid shear-layer roll-up with diagnostics.
    Rollup(RunArgs),
    /// Project a reference snapshot onto a coarse mesh.
    Project(RunArgs),
    /// Time-dependent run of any case and mode.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides as `--key value` pairs.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

impl RunArgs {
    fn load(&self, default_case: CaseKind) -> CliResult<config::RunConfig> {
        let file = match &self.config {
            None => Vec::new(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                parse_file(&path.display().to_string(), &text)?
            }
        };
        parse_config(default_case, &file, &parse_flags(&self.overrides)?)
    }
}

/// Runs a parsed command line, writing the report to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::TgvConverge(a) => commands::cmd_tgv_convergence(&a.load(CaseKind::Tgv)?, out),
        Command::Rollup(a) => commands::cmd_rollup(&a.load(CaseKind::Rollup)?, out),
        Command::Project(a) => commands::cmd_project(&a.load(CaseKind::Tgv)?, out),
        Command::Run(a) => commands::cmd_run(&a.load(CaseKind::Tgv)?, out),
    }
}
