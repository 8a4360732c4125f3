//! `nfcrb`: near-field OFDM Cramér-Rao bounds from the command line.

mod compute;
mod config;
mod validate;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{parse_document, parse_override, Entry, Origin, Resolved};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nfcrb", version, about = "Cramér-Rao bounds for wide-band OFDM near-field sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one key; repeatable, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output path (sweep CSV); standard output when absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Worker threads for sweeps and validation.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Seed for every random draw; overrides the `seed` key.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Figure preset (fig1..fig8) used as the base configuration.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bounds, condition number and regime diagnostics for one scene.
    Compute,
    /// Parameter sweep written as CSV.
    Sweep,
    /// Oracle and identity checks with a JSON summary.
    Validate,
}

fn resolve(cli: &Cli) -> Result<Resolved, CliError> {
    let mut entries: Vec<Entry> = Vec::new();
    if let Some(name) = &cli.preset {
        let origin = Origin::Flag { name: "--preset", index: 1 };
        entries.push(Entry { key: "preset".into(), value: name.clone(), value_origin: origin.clone(), origin });
    }
    if let Some(path) = &cli.config {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let file = parse_document(&text, &path.display().to_string())?;
        // the flag wins over a preset named inside the file
        let skip_preset = cli.preset.is_some();
        entries.extend(file.into_iter().filter(|e| !(skip_preset && e.key == "preset")));
    }
    for (i, arg) in cli.set.iter().enumerate() {
        entries.push(parse_override(arg, i + 1)?);
    }
    if let Some(seed) = cli.seed {
        let origin = Origin::Flag { name: "--seed", index: 1 };
        entries.push(Entry { key: "seed".into(), value: seed.to_string(), value_origin: origin.clone(), origin });
    }
    Resolved::from_entries(&entries)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.workers == Some(0) {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))?;
    }
    let resolved = resolve(cli)?;
    match cli.command {
        Command::Compute => compute::cmd_compute(&resolved),
        Command::Sweep => compute::cmd_sweep(&resolved, cli.out.as_deref(), cli.workers),
        Command::Validate => validate::cmd_validate(&resolved),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
