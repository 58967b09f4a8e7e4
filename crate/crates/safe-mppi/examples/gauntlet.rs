//! Run the shipped tight-gap benchmark and print a summary table.
//!
//! Usage: cargo run --example gauntlet [--seeds N]

use safe_mppi::presets;
use safe_mppi::simharness::run_batch;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_seeds = args
        .iter()
        .position(|a| a == "--seeds")
        .and_then(|i| args.get(i + 1))
        .and_then(|v| v.parse::<usize>().ok());
    let trace = args.iter().any(|a| a == "--trace");

    let mut bench = presets::tight_gap();
    if let Some(n) = n_seeds {
        bench.seeds.truncate(n);
    }

    if trace {
        for spec in &bench.modes {
            let record =
                safe_mppi::simharness::run_episode(&bench.scenario, &spec.config, 1).unwrap();
            println!("=== {} seed 1: {:?} ===", spec.label, record.outcome.class);
            for row in record.rows.iter().step_by(10) {
                println!(
                    "  k={:>3} x={:>6.2} y={:>6.2} v={:>5.2} steer={:>6.3} acc={:>6.3} s_e={:>5.2} cb*={:>9.2} margin={:>8.2} rho={:>9.2}",
                    row.step, row.state.x, row.state.y, row.state.v,
                    row.control.steer, row.control.accel,
                    row.s_e, row.c_b_star, row.min_margin, row.rho
                );
            }
        }
        return;
    }

    let start = std::time::Instant::now();
    let (batches, failures) = run_batch(&bench.scenario, &bench.modes, &bench.seeds);
    for f in &failures {
        eprintln!("harness failure: {} seed {}: {}", f.mode, f.seed, f.message);
    }
    println!(
        "{} seeds, {:.1}s wall",
        bench.seeds.len(),
        start.elapsed().as_secs_f64()
    );
    println!(
        "{:<20} {:>8} {:>8} {:>10} {:>10} {:>12}",
        "mode", "success", "stop", "collision", "avg vel", "avg pos err"
    );
    for b in &batches {
        let s = &b.summary;
        println!(
            "{:<20} {:>8} {:>8} {:>10} {:>10.2} {:>12.2}",
            s.label, s.success, s.fail_stop, s.fail_collision, s.mean_avg_speed, s.mean_avg_pos_error
        );
        for r in &b.records {
            println!(
                "  seed {:>3}: {:?} steps={} avg_v={:.2} avg_err={:.2}",
                r.seed,
                r.outcome.class,
                r.outcome.steps,
                r.outcome.avg_speed,
                r.outcome.avg_pos_error
            );
        }
    }
}
