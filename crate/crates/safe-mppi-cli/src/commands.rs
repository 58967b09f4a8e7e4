//! The run / batch / export-plots commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use safe_mppi::controller::ControlMode;
use safe_mppi::scenario::{Outcome, OutcomeClass};
use safe_mppi::simharness::{
    run_batch, run_episode, write_trajectory_csv, BatchSummary, HarnessFailure, RunRecord,
};

use crate::config::ScenarioConfigFile;
use crate::CliError;

/// Sidecar JSON for one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutcomeJson {
    pub schema_version: u32,
    pub mode: ControlMode,
    pub seed: u64,
    pub class: OutcomeClass,
    pub steps: usize,
    pub avg_speed: f64,
    pub avg_pos_error: f64,
}

impl OutcomeJson {
    fn new(mode: ControlMode, seed: u64, outcome: &Outcome) -> Self {
        Self {
            schema_version: crate::config::SCHEMA_VERSION,
            mode,
            seed,
            class: outcome.class,
            steps: outcome.steps,
            avg_speed: outcome.avg_speed,
            avg_pos_error: outcome.avg_pos_error,
        }
    }
}

/// Batch summary document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryJson {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    pub modes: Vec<BatchSummary>,
    pub failures: Vec<HarnessFailure>,
}

fn io_err(context: &str, err: std::io::Error) -> CliError {
    CliError::Io(format!("{context}: {err}"))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(&format!("creating {}", dir.display()), e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(&format!("writing {}", path.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    write_text(path, &text)
}

fn write_record(dir: &Path, config: &ScenarioConfigFile, record: &RunRecord) -> Result<(), CliError> {
    ensure_dir(dir)?;
    write_trajectory_csv(&dir.join("trajectory.csv"), record)
        .map_err(|e| io_err("writing trajectory.csv", e))?;
    write_json(
        &dir.join("outcome.json"),
        &OutcomeJson::new(record.mode, record.seed, &record.outcome),
    )?;
    write_text(&dir.join("config.toml"), &config.to_toml())
}

/// Execute one episode and write `trajectory.csv`, `outcome.json`, and the
/// resolved `config.toml` into the output directory.
pub fn cmd_run(
    mut config: ScenarioConfigFile,
    mode: Option<ControlMode>,
    seed: Option<u64>,
    out: PathBuf,
) -> Result<(), CliError> {
    if let Some(mode) = mode {
        config.controller.mode = mode;
    }
    if let Some(seed) = seed {
        config.controller.rng_seed = seed;
    }
    let scenario = config.scenario();
    let seed = config.controller.rng_seed;
    let record = run_episode(&scenario, &config.controller, seed)
        .map_err(|e| CliError::Io(format!("run failed: {e}")))?;
    write_record(&out, &config, &record)?;
    println!(
        "{} seed {}: {:?} after {} steps (avg speed {:.2} m/s, avg position error {:.2} m)",
        config.controller.mode.label(),
        seed,
        record.outcome.class,
        record.outcome.steps,
        record.outcome.avg_speed,
        record.outcome.avg_pos_error
    );
    println!("artifacts in {}", out.display());
    Ok(())
}

/// Run every (mode, seed) pair of the batch and write per-run artifacts
/// plus `summary.json`.
pub fn cmd_batch(
    config: ScenarioConfigFile,
    modes: Option<Vec<ControlMode>>,
    out: PathBuf,
) -> Result<(), CliError> {
    let modes = modes.unwrap_or_else(|| config.batch.modes.clone());
    if modes.is_empty() {
        return Err(CliError::Config("no modes selected".to_string()));
    }
    let specs = config.mode_specs(&modes)?;
    let scenario = config.scenario();
    let seeds = config.batch.seeds.clone();

    let (batches, failures) = run_batch(&scenario, &specs, &seeds);
    for f in &failures {
        eprintln!("harness failure: {} seed {}: {}", f.mode, f.seed, f.message);
    }

    ensure_dir(&out)?;
    write_text(&out.join("config.toml"), &config.to_toml())?;
    for batch in &batches {
        for record in &batch.records {
            let dir = out.join(&batch.label).join(format!("seed-{}", record.seed));
            write_record(&dir, &config, record)?;
        }
    }
    let summary = SummaryJson {
        schema_version: crate::config::SCHEMA_VERSION,
        seeds,
        modes: batches.iter().map(|b| b.summary.clone()).collect(),
        failures,
    };
    write_json(&out.join("summary.json"), &summary)?;

    println!(
        "{:<20} {:>7} {:>10} {:>15} {:>12} {:>16}",
        "mode", "success", "fail-stop", "fail-collision", "avg vel m/s", "avg pos error m"
    );
    for b in &batches {
        let s = &b.summary;
        println!(
            "{:<20} {:>7} {:>10} {:>15} {:>12.2} {:>16.2}",
            s.label, s.success, s.fail_stop, s.fail_collision, s.mean_avg_speed, s.mean_avg_pos_error
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
