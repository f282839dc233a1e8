//! `perturbench`: generate perturbed variants of math word-problem
//! benchmarks, evaluate chat-completion endpoints on them, and report
//! accuracy degradation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use perturbench::Result;

use config::{load_run_config, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "perturbench",
    version,
    about = "Distractor-injection robustness benchmark toolkit",
    propagate_version = true
)]
struct Cli {
    /// Run configuration file (TOML); flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Increase log verbosity (-v: info, -vv: debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a corpus and print segmentation statistics and warnings.
    Validate {
        #[command(flatten)]
        overrides: Overrides,
    },

    /// Generate perturbed variant files for the configured kinds and levels.
    Perturb {
        #[command(flatten)]
        overrides: Overrides,
    },

    /// Evaluate the configured backend on previously generated variants.
    Eval {
        #[command(flatten)]
        overrides: Overrides,

        /// Start over instead of resuming from existing records.
        #[arg(long)]
        no_resume: bool,
    },

    /// Aggregate evaluation records into CSV, Markdown, and plot data.
    Report {
        #[command(flatten)]
        overrides: Overrides,

        /// Records file to aggregate (defaults to `<out>/records.jsonl`).
        #[arg(long, value_name = "PATH")]
        records: Option<PathBuf>,
    },

    /// Run the whole pipeline (perturb, eval, report) and write a manifest.
    Reproduce {
        #[command(flatten)]
        overrides: Overrides,

        /// Re-run an earlier run from its manifest instead of a config file.
        #[arg(long, value_name = "PATH", conflicts_with = "config")]
        manifest: Option<PathBuf>,

        /// Start over instead of resuming from existing records.
        #[arg(long)]
        no_resume: bool,
    },
}

fn resolve_config(cli_config: Option<&PathBuf>, overrides: &Overrides) -> Result<RunConfig> {
    load_run_config(cli_config.map(|p| p.as_path()), overrides)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Validate { overrides } => {
            let config = resolve_config(cli.config.as_ref(), overrides)?;
            commands::cmd_validate(&config)
        }
        Command::Perturb { overrides } => {
            let config = resolve_config(cli.config.as_ref(), overrides)?;
            commands::cmd_perturb(&config).map(|_| ())
        }
        Command::Eval {
            overrides,
            no_resume,
        } => {
            let config = resolve_config(cli.config.as_ref(), overrides)?;
            commands::cmd_eval(&config, !no_resume).map(|_| ())
        }
        Command::Report { overrides, records } => {
            let config = resolve_config(cli.config.as_ref(), overrides)?;
            commands::cmd_report(&config, records.as_deref()).map(|_| ())
        }
        Command::Reproduce {
            overrides,
            manifest,
            no_resume,
        } => {
            let config = match manifest {
                Some(path) => {
                    let manifest = commands::load_manifest(path)?;
                    let mut config = manifest.config;
                    if let Some(out) = &overrides.out {
                        config.output.dir = out.clone();
                        config.eval.cache_dir = out.join("cache");
                    }
                    if let Some(cache) = &overrides.cache_dir {
                        config.eval.cache_dir = cache.clone();
                    }
                    config.validate()?;
                    config
                }
                None => resolve_config(cli.config.as_ref(), overrides)?,
            };
            commands::cmd_reproduce(&config, !no_resume)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        })
        .parse_default_env()
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
