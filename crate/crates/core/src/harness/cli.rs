//! Command-line entry point.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use log::LevelFilter;

use super::{compute_bounds, run_experiment, validate_experiment, HarnessError, LoadedConfig};
use crate::exec::with_jobs;
use crate::gridworld::default_experiment_config;

#[derive(Debug, Parser)]
#[command(name = "decpomdp", version, about = "Diffusion policy evaluation for Dec-POMDPs")]
struct Cli {
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate every (algorithm, seed) pair and write traces.
    Run { config: PathBuf },
    /// Check the model and network only.
    Validate { config: PathBuf },
    /// Print theory constants and bound reports without simulating.
    Bounds { config: PathBuf },
    /// Print the default tracking experiment config.
    PaperDefault,
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn execute(cli: &Cli) -> Result<(), HarnessError> {
    match &cli.command {
        Command::PaperDefault => {
            println!("{}", default_experiment_config().to_json());
            Ok(())
        }
        Command::Validate { config } => {
            let loaded = LoadedConfig::from_path(config)?;
            let reports = validate_experiment(&loaded)?;
            let valid = reports.iter().all(|r| r.is_valid());
            let doc = serde_json::json!({ "valid": valid, "seeds": reports });
            if !valid {
                return Err(HarnessError::Invalid(doc));
            }
            if !cli.quiet {
                print_json(&doc);
            }
            Ok(())
        }
        Command::Bounds { config } => {
            let loaded = LoadedConfig::from_path(config)?;
            let bounds = compute_bounds(&loaded)?;
            if let Some(b) = bounds.iter().find(|b| b.report.is_none()) {
                return Err(HarnessError::Config(format!(
                    "bounds unavailable for seed {}: {}",
                    b.seed,
                    b.unavailable.as_deref().unwrap_or("unknown")
                )));
            }
            print_json(&bounds);
            Ok(())
        }
        Command::Run { config } => {
            let loaded = LoadedConfig::from_path(config)?;
            let out = cli
                .out
                .clone()
                .unwrap_or_else(|| loaded.config.output_dir.clone());
            let artifacts = with_jobs(cli.jobs, || run_experiment(&loaded, &out))?;
            if !cli.quiet {
                print_json(&serde_json::json!({
                    "output_dir": artifacts.output_dir,
                    "files": artifacts.manifest.files,
                }));
            }
            Ok(())
        }
    }
}

/// Parse `args` (program name first), run, and return the exit code:
/// 0 on success, 1 on runtime failure, 2 on usage errors.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet { LevelFilter::Error } else { LevelFilter::Info };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("DECPOMDP_LOG")
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}
