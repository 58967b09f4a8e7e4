//! Closed-loop simulation of controller + vehicle + scenario: seeded
//! episodes, batch runs over (mode, seed) grids, and the aggregate
//! statistics behind the benchmark tables and band plots.
//!
//! The plant integrates the same dynamics the controller plans with; no
//! model mismatch is injected.

use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{
    control_step, ControlMode, ControlSequence, ControllerConfig, ControllerError,
    ExplorationState,
};
use crate::dynamics::{step_vehicle, VehicleControl, VehicleState};
use crate::safety::dbas_step;
use crate::scenario::{classify_outcome, ExecutedStep, Outcome, Scenario};

/// One logged simulation step: the state before the control is applied,
/// the applied control, and the optimizer diagnostics of that step. The
/// final row of a run logs the terminal state with a zero control and
/// carries the last exploration values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub t: f64,
    pub state: VehicleState,
    pub control: VehicleControl,
    /// Barrier state along the executed trajectory.
    pub w: f64,
    pub s_e: f64,
    pub c_b_star: f64,
    pub min_margin: f64,
    pub rho: f64,
}

/// Full log of one closed-loop episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub mode: ControlMode,
    pub rows: Vec<StepRow>,
    pub outcome: Outcome,
}

impl RunRecord {
    /// Recompute the outcome from the logged rows; equals the stored
    /// outcome by construction.
    pub fn replay_outcome(&self, scenario: &Scenario) -> Outcome {
        let steps: Vec<ExecutedStep> = self
            .rows
            .iter()
            .map(|r| ExecutedStep {
                state: r.state,
                min_margin: r.min_margin,
            })
            .collect();
        classify_outcome(&steps, scenario.vehicle.dt, &scenario.path, &scenario.limits)
    }
}

/// Run one episode: iterate state estimate -> control step -> actuation
/// until the outcome classifier terminates the run. Deterministic in the
/// seed, which replaces the configured RNG seed.
pub fn run_episode(
    scenario: &Scenario,
    config: &ControllerConfig,
    seed: u64,
) -> Result<RunRecord, ControllerError> {
    let mut config = config.clone();
    config.rng_seed = seed;

    let dt = scenario.vehicle.dt;
    let stall_window = scenario.limits.stall_steps(dt);
    let end = *scenario.path.end();

    let mut state = scenario.start;
    let mut w = crate::safety::fused_barrier(
        &state,
        &scenario.vehicle,
        &scenario.constraints,
        &scenario.barrier,
    );
    let mut nominal = ControlSequence::zeros(config.horizon);
    let mut exploration = ExplorationState::initial(&config);
    let mut rows: Vec<StepRow> = Vec::new();
    let mut stall_count = 0usize;
    let mut step = 0usize;

    loop {
        let margin = scenario.min_margin(&state);
        let dx = state.x - end.pos[0];
        let dy = state.y - end.pos[1];
        let reached = (dx * dx + dy * dy).sqrt() <= scenario.limits.completion_radius;
        let terminal = margin < 0.0
            || reached
            || stall_count >= stall_window
            || step >= scenario.limits.max_steps;
        if terminal {
            rows.push(StepRow {
                step,
                t: step as f64 * dt,
                state,
                control: VehicleControl::default(),
                w,
                s_e: exploration.s_e,
                c_b_star: exploration.c_b_star,
                min_margin: margin,
                rho: 0.0,
            });
            break;
        }

        let result = control_step(
            &state,
            &nominal,
            &config,
            scenario,
            &exploration,
            step as u64,
        )?;
        rows.push(StepRow {
            step,
            t: step as f64 * dt,
            state,
            control: result.applied,
            w,
            s_e: result.diagnostics.s_e,
            c_b_star: result.diagnostics.c_b_star,
            min_margin: result.diagnostics.min_margin,
            rho: result.diagnostics.rho,
        });

        let next = step_vehicle(&state, &result.applied, &scenario.vehicle)?;
        w = dbas_step(
            w,
            &next,
            &scenario.vehicle,
            &scenario.constraints,
            &scenario.barrier,
        );
        state = next;
        nominal = result.next_nominal;
        exploration = result.next_exploration;
        step += 1;
        if state.v < scenario.limits.v_stall {
            stall_count += 1;
        } else {
            stall_count = 0;
        }
    }

    let executed: Vec<ExecutedStep> = rows
        .iter()
        .map(|r| ExecutedStep {
            state: r.state,
            min_margin: r.min_margin,
        })
        .collect();
    let outcome = classify_outcome(&executed, dt, &scenario.path, &scenario.limits);
    Ok(RunRecord {
        seed,
        mode: config.mode,
        rows,
        outcome,
    })
}

/// A labeled controller configuration for a batch comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub label: String,
    pub config: ControllerConfig,
}

impl ModeSpec {
    pub fn new(config: ControllerConfig) -> Self {
        Self {
            label: config.mode.label().to_string(),
            config,
        }
    }
}

/// A run that panicked or errored inside the harness; reported separately
/// from the outcome statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessFailure {
    pub mode: String,
    pub seed: u64,
    pub message: String,
}

/// Mean and sample standard deviation at one step index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub mean: f64,
    pub std: f64,
}

/// Per-step mean/std bands of the logged speed, steering, and barrier
/// state across the runs of one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldBands {
    pub v: Vec<BandPoint>,
    pub steer: Vec<BandPoint>,
    pub w: Vec<BandPoint>,
}

/// Aggregate statistics of one mode over a seed batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub label: String,
    pub runs: usize,
    pub success: usize,
    pub fail_stop: usize,
    pub fail_collision: usize,
    pub mean_avg_speed: f64,
    pub std_avg_speed: f64,
    pub mean_avg_pos_error: f64,
    pub std_avg_pos_error: f64,
    pub bands: FieldBands,
}

/// Results of one mode across all seeds.
#[derive(Clone, Debug)]
pub struct ModeBatch {
    pub label: String,
    pub records: Vec<RunRecord>,
    pub summary: BatchSummary,
}

/// Run every (mode, seed) pair, in parallel at the run level, and aggregate
/// per mode in seed order. Panics and controller errors inside individual
/// runs are isolated and reported as harness failures, not outcomes.
pub fn run_batch(
    scenario: &Scenario,
    modes: &[ModeSpec],
    seeds: &[u64],
) -> (Vec<ModeBatch>, Vec<HarnessFailure>) {
    assert!(!seeds.is_empty(), "run_batch needs at least one seed");
    let tasks: Vec<(usize, u64)> = modes
        .iter()
        .enumerate()
        .flat_map(|(i, _)| seeds.iter().map(move |&s| (i, s)))
        .collect();

    let results: Vec<(usize, u64, Result<RunRecord, String>)> = tasks
        .par_iter()
        .map(|&(mode_idx, seed)| {
            let spec = &modes[mode_idx];
            let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
                run_episode(scenario, &spec.config, seed)
            }));
            let flattened = match outcome {
                Ok(Ok(record)) => Ok(record),
                Ok(Err(err)) => Err(err.to_string()),
                Err(payload) => Err(panic_message(payload)),
            };
            (mode_idx, seed, flattened)
        })
        .collect();

    let mut failures = Vec::new();
    let mut batches = Vec::new();
    for (mode_idx, spec) in modes.iter().enumerate() {
        let mut records = Vec::new();
        for (idx, seed, result) in &results {
            if *idx != mode_idx {
                continue;
            }
            match result {
                Ok(record) => records.push(record.clone()),
                Err(message) => failures.push(HarnessFailure {
                    mode: spec.label.clone(),
                    seed: *seed,
                    message: message.clone(),
                }),
            }
        }
        let summary = summarize(&spec.label, &records);
        batches.push(ModeBatch {
            label: spec.label.clone(),
            records,
            summary,
        });
    }
    (batches, failures)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "run panicked".to_string()
    }
}

/// Per-step mean and sample standard deviation of a selected field over the
/// common prefix length of the records.
pub fn aggregate_bands<F>(records: &[RunRecord], select: F) -> Vec<BandPoint>
where
    F: Fn(&StepRow) -> f64,
{
    assert!(!records.is_empty(), "cannot aggregate zero records");
    let prefix = records.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    (0..prefix)
        .map(|k| {
            let values: Vec<f64> = records.iter().map(|r| select(&r.rows[k])).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = sample_std(&values, mean);
            BandPoint { mean, std }
        })
        .collect()
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() - 1) as f64;
    var.sqrt()
}

fn mean_std<I: Iterator<Item = f64> + Clone>(values: I) -> (f64, f64) {
    let collected: Vec<f64> = values.collect();
    if collected.is_empty() {
        return (0.0, 0.0);
    }
    let mean = collected.iter().sum::<f64>() / collected.len() as f64;
    (mean, sample_std(&collected, mean))
}

/// Aggregate the records of one mode into counts, metric statistics, and
/// per-step bands.
pub fn summarize(label: &str, records: &[RunRecord]) -> BatchSummary {
    use crate::scenario::OutcomeClass::*;
    let count = |class| records.iter().filter(|r| r.outcome.class == class).count();
    let (mean_avg_speed, std_avg_speed) =
        mean_std(records.iter().map(|r| r.outcome.avg_speed));
    let (mean_avg_pos_error, std_avg_pos_error) =
        mean_std(records.iter().map(|r| r.outcome.avg_pos_error));
    let bands = if records.is_empty() {
        FieldBands {
            v: Vec::new(),
            steer: Vec::new(),
            w: Vec::new(),
        }
    } else {
        FieldBands {
            v: aggregate_bands(records, |r| r.state.v),
            steer: aggregate_bands(records, |r| r.control.steer),
            w: aggregate_bands(records, |r| r.w),
        }
    };
    BatchSummary {
        label: label.to_string(),
        runs: records.len(),
        success: count(Success),
        fail_stop: count(FailStop),
        fail_collision: count(FailCollision),
        mean_avg_speed,
        std_avg_speed,
        mean_avg_pos_error,
        std_avg_pos_error,
        bands,
    }
}

/// Fixed column order of the trajectory CSV. Floats print in Rust's
/// shortest round-trip form, so byte equality is a meaningful determinism
/// check.
pub const TRAJECTORY_CSV_HEADER: &str =
    "step,t,x,y,theta,v,steer,accel,w,s_e,c_b_star,min_margin,rho";

/// Serialize a record to trajectory CSV text.
pub fn trajectory_to_csv(record: &RunRecord) -> String {
    let mut out = String::with_capacity(record.rows.len() * 96 + 64);
    out.push_str(TRAJECTORY_CSV_HEADER);
    out.push('\n');
    for r in &record.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.step,
            r.t,
            r.state.x,
            r.state.y,
            r.state.theta,
            r.state.v,
            r.control.steer,
            r.control.accel,
            r.w,
            r.s_e,
            r.c_b_star,
            r.min_margin,
            r.rho
        ));
    }
    out
}

pub fn write_trajectory_csv(path: &Path, record: &RunRecord) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(trajectory_to_csv(record).as_bytes())
}

/// Parse trajectory CSV text back into rows.
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<StepRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == TRAJECTORY_CSV_HEADER => {}
        other => return Err(format!("unexpected trajectory CSV header: {other:?}")),
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            return Err(format!(
                "line {}: expected 13 fields, found {}",
                lineno + 2,
                fields.len()
            ));
        }
        let parse = |i: usize| -> Result<f64, String> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| format!("line {}: field {}: {e}", lineno + 2, i + 1))
        };
        rows.push(StepRow {
            step: fields[0]
                .parse::<usize>()
                .map_err(|e| format!("line {}: step: {e}", lineno + 2))?,
            t: parse(1)?,
            state: VehicleState {
                x: parse(2)?,
                y: parse(3)?,
                theta: parse(4)?,
                v: parse(5)?,
            },
            control: VehicleControl {
                steer: parse(6)?,
                accel: parse(7)?,
            },
            w: parse(8)?,
            s_e: parse(9)?,
            c_b_star: parse(10)?,
            min_margin: parse(11)?,
            rho: parse(12)?,
        });
    }
    Ok(rows)
}
