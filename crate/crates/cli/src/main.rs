use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tripsyn_core::config::{ExperimentConfig, Scenario};
use tripsyn_core::experiment::{resolve, run_experiment};
use tripsyn_core::Error;

/// Run neuron-astrocyte experiments from TOML configs.
///
/// Value precedence, lowest first: scenario preset, config file,
/// `--set key=value`, then `--scenario`, `--seed` and `--out`.
#[derive(Parser)]
#[command(name = "tripsyn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Replace the config's scenario.
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config value, e.g. `protocol.eta=0.5`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// List or print the built-in scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Parse and validate a config without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a minimal config file for a scenario.
    Show { name: Scenario },
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } => ExitCode::from(2),
        _ => ExitCode::FAILURE,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, scenario, seed, out, set } => {
            let mut cfg = ExperimentConfig::load(&config, &set)?;
            if let Some(s) = scenario {
                cfg.scenario = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let summary = run_experiment(&cfg)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!("scenario {} (seed {}) -> {}", summary.scenario, cfg.seed, summary.output_dir.display());
            for f in &summary.files {
                println!("  {f}");
            }
            println!("{}", serde_json::to_string_pretty(&summary.metrics)?);
        }
        Command::Presets { action: PresetAction::List } => {
            for s in Scenario::ALL {
                println!("{:<24}{}", s.name(), s.description());
            }
        }
        Command::Presets { action: PresetAction::Show { name } } => {
            print!("{}", ExperimentConfig::preset(name).to_toml()?);
        }
        Command::Validate { config, set } => {
            let cfg = ExperimentConfig::load(&config, &set)?;
            let (_, warnings) = resolve(&cfg)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            println!("{}: ok (scenario {})", config.display(), cfg.scenario);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
