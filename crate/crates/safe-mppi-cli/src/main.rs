//! `safe-mppi` CLI: single closed-loop runs, seeded benchmark batches, and
//! plot-data export.
//!
//! Exit codes: 0 completed run (the outcome lives in `outcome.json`, not
//! the exit code), 2 config error, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use safe_mppi::controller::ControlMode;
use safe_mppi_cli::{commands, config, plots, CliError};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    DbasAdaptive,
    DbasFixed,
    BaselineIndicator,
}

impl From<ModeArg> for ControlMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::DbasAdaptive => ControlMode::DbasAdaptive,
            ModeArg::DbasFixed => ControlMode::DbasFixed,
            ModeArg::BaselineIndicator => ControlMode::BaselineIndicator,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "safe-mppi",
    version,
    about = "Sampling-based MPC with barrier-state safety: runs, batches, plot export"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop episode from a config file.
    Run {
        /// Scenario config file (TOML).
        config: PathBuf,
        /// Controller mode; defaults to the config's controller.mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// RNG seed; defaults to the config's controller.rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every (mode, seed) pair of the config's batch section.
    Batch {
        /// Scenario config file (TOML).
        config: PathBuf,
        /// Comma-separated mode list overriding batch.modes.
        #[arg(long, value_enum, value_delimiter = ',')]
        modes: Option<Vec<ModeArg>>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export plot-ready CSVs from a run or batch directory.
    ExportPlots {
        /// Directory holding run artifacts.
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Output directory precedence: --out flag, then SAFE_MPPI_OUT, then the
/// config's output_dir (when available), then ./out.
fn resolve_out(flag: Option<PathBuf>, from_config: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("SAFE_MPPI_OUT").map(PathBuf::from))
        .or(from_config)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            mode,
            seed,
            out,
        } => {
            let parsed = config::ScenarioConfigFile::load(&config)?;
            let out = resolve_out(out, parsed.output_dir.clone());
            commands::cmd_run(parsed, mode.map(Into::into), seed, out)
        }
        Command::Batch { config, modes, out } => {
            let parsed = config::ScenarioConfigFile::load(&config)?;
            let out = resolve_out(out, parsed.output_dir.clone());
            commands::cmd_batch(
                parsed,
                modes.map(|m| m.into_iter().map(Into::into).collect()),
                out,
            )
        }
        Command::ExportPlots { input, out } => {
            let out = resolve_out(out, None);
            plots::cmd_export_plots(&input, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
