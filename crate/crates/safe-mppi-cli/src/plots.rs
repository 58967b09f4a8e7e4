//! Plot-ready data export: executed paths vs reference vs obstacles, and
//! per-step mean/std bands of speed, steering, and the barrier state. Data
//! files only; no image rendering.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use safe_mppi::simharness::{aggregate_bands, parse_trajectory_csv, RunRecord, StepRow};

use crate::commands::{OutcomeJson, SummaryJson};
use crate::config::ScenarioConfigFile;
use crate::CliError;

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn load_record(dir: &Path) -> Result<(String, RunRecord), CliError> {
    let rows = parse_trajectory_csv(&read_text(&dir.join("trajectory.csv"))?)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.join("trajectory.csv").display())))?;
    let outcome: OutcomeJson = serde_json::from_str(&read_text(&dir.join("outcome.json"))?)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.join("outcome.json").display())))?;
    let record = RunRecord {
        seed: outcome.seed,
        mode: outcome.mode,
        rows,
        outcome: safe_mppi::scenario::Outcome {
            class: outcome.class,
            steps: outcome.steps,
            avg_speed: outcome.avg_speed,
            avg_pos_error: outcome.avg_pos_error,
        },
    };
    Ok((outcome.mode.label().to_string(), record))
}

/// Records grouped by mode label, in deterministic order.
type GroupedRecords = Vec<(String, Vec<RunRecord>)>;

fn load_single_run(dir: &Path) -> Result<GroupedRecords, CliError> {
    let (label, record) = load_record(dir)?;
    Ok(vec![(label, vec![record])])
}

fn load_batch(dir: &Path) -> Result<GroupedRecords, CliError> {
    let summary: SummaryJson = serde_json::from_str(&read_text(&dir.join("summary.json"))?)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.join("summary.json").display())))?;
    let mut grouped = Vec::new();
    for mode in &summary.modes {
        let mut records = Vec::new();
        for seed in &summary.seeds {
            let run_dir = dir.join(&mode.label).join(format!("seed-{seed}"));
            if run_dir.join("trajectory.csv").is_file() {
                records.push(load_record(&run_dir)?.1);
            }
        }
        if records.is_empty() {
            return Err(CliError::Io(format!(
                "no run artifacts found for mode '{}' under {}",
                mode.label,
                dir.display()
            )));
        }
        grouped.push((mode.label.clone(), records));
    }
    Ok(grouped)
}

/// Export plot data from a run or batch directory into `out`.
pub fn cmd_export_plots(input: &Path, out: PathBuf) -> Result<(), CliError> {
    let grouped = if input.join("trajectory.csv").is_file() {
        load_single_run(input)?
    } else if input.join("summary.json").is_file() {
        load_batch(input)?
    } else {
        return Err(CliError::Io(format!(
            "{} contains neither trajectory.csv nor summary.json",
            input.display()
        )));
    };
    let config = ScenarioConfigFile::load(&input.join("config.toml"))?;
    let scenario = config.scenario();

    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", out.display())))?;

    // Executed paths, one row per logged state.
    let mut executed = String::from("run,step,x,y\n");
    for (label, records) in &grouped {
        for record in records {
            let run = format!("{label}:{}", record.seed);
            for row in &record.rows {
                writeln!(executed, "{run},{},{},{}", row.step, row.state.x, row.state.y).unwrap();
            }
        }
    }
    write_file(&out.join("executed_path.csv"), &executed)?;

    let mut reference = String::from("step,x,y,heading,speed,arc_length\n");
    for (i, s) in scenario.path.samples.iter().enumerate() {
        writeln!(
            reference,
            "{i},{},{},{},{},{}",
            s.pos[0], s.pos[1], s.heading, s.speed, s.arc_length
        )
        .unwrap();
    }
    write_file(&out.join("reference_path.csv"), &reference)?;

    let mut obstacles = String::from("idx,x,y,radius\n");
    for (i, o) in scenario.constraints.obstacles.iter().enumerate() {
        writeln!(obstacles, "{i},{},{},{}", o.center[0], o.center[1], o.radius).unwrap();
    }
    write_file(&out.join("obstacles.csv"), &obstacles)?;

    // Mean/std bands per mode for speed, steering, and barrier state.
    type FieldSelector = fn(&StepRow) -> f64;
    let mut bands = String::from("mode,field,step,mean,std\n");
    let fields: [(&str, FieldSelector); 3] = [
        ("v", |r| r.state.v),
        ("steer", |r| r.control.steer),
        ("w", |r| r.w),
    ];
    for (label, records) in &grouped {
        for (field, select) in fields {
            for (step, point) in aggregate_bands(records, select).iter().enumerate() {
                writeln!(bands, "{label},{field},{step},{},{}", point.mean, point.std).unwrap();
            }
        }
    }
    write_file(&out.join("bands.csv"), &bands)?;

    println!("plot data in {}", out.display());
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}
