//! The shipped tight-gap benchmark: a line-plus-semicircle reference path
//! threaded through five circular obstacles, the two controller
//! configurations compared on it, and the fixed seed set.

use crate::controller::{ControlMode, ControllerConfig};
use crate::dynamics::{VehicleParams, VehicleState};
use crate::safety::{BarrierConfig, CircularObstacle, ConstraintSet};
use crate::scenario::{build_line_semicircle_path, CostParams, RunLimits, Scenario};
use crate::simharness::ModeSpec;

/// A complete benchmark definition: world, controller variants, seeds.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub scenario: Scenario,
    pub modes: Vec<ModeSpec>,
    pub seeds: Vec<u64>,
}

/// Path geometry of the shipped scenario.
pub const LINE_LENGTH: f64 = 30.0;
pub const ARC_RADIUS: f64 = 20.0;
pub const REF_SPEED: f64 = 5.0;
pub const PATH_SPACING: f64 = 1.0;

/// Obstacles straddling the path. Gap widths are one vehicle width plus a
/// meter. The first gap is displaced sideways so the corridor must be
/// entered off-path, and a near-centerline blocker forces a swerve right
/// after it.
pub fn gauntlet_obstacles() -> Vec<CircularObstacle> {
    vec![
        // 4 m gap on the straight segment, centered 2 m right of the path.
        CircularObstacle {
            center: [14.0, 1.5],
            radius: 1.5,
        },
        CircularObstacle {
            center: [14.0, -5.5],
            radius: 1.5,
        },
        // Blocker almost on the centerline near the end of the line.
        CircularObstacle {
            center: [24.0, 0.8],
            radius: 1.5,
        },
        // 4 m gap straddling the arc at its apex.
        CircularObstacle {
            center: [53.5, 20.0],
            radius: 1.5,
        },
        CircularObstacle {
            center: [46.5, 20.0],
            radius: 1.5,
        },
    ]
}

/// The scenario of the shipped benchmark.
pub fn tight_gap_scenario() -> Scenario {
    Scenario {
        vehicle: VehicleParams::default(),
        // Flying start: the vehicle is already tracking at reference speed.
        start: VehicleState::new(0.0, 0.0, 0.0, REF_SPEED),
        path: build_line_semicircle_path(LINE_LENGTH, ARC_RADIUS, REF_SPEED, PATH_SPACING),
        costs: CostParams::default(),
        constraints: ConstraintSet::new(gauntlet_obstacles()),
        barrier: BarrierConfig::default(),
        limits: RunLimits::default(),
    }
}

/// Controller configuration shared by both compared modes.
pub fn base_controller() -> ControllerConfig {
    ControllerConfig::default()
}

/// The shipped benchmark: barrier-state controller with adaptive
/// exploration against the impulse-indicator baseline, 20 seeds.
pub fn tight_gap() -> Benchmark {
    let base = base_controller();
    let adaptive = ControllerConfig {
        mode: ControlMode::DbasAdaptive,
        ..base.clone()
    };
    let baseline = ControllerConfig {
        mode: ControlMode::BaselineIndicator,
        ..base
    };
    Benchmark {
        scenario: tight_gap_scenario(),
        modes: vec![ModeSpec::new(adaptive), ModeSpec::new(baseline)],
        seeds: (1..=20).collect(),
    }
}
