//! Reference paths, tracking costs, and run-outcome classification.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{VehicleParams, VehicleState};
use crate::safety::{min_margin, BarrierConfig, ConstraintSet};

/// One sample of the reference path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub pos: [f64; 2],
    pub heading: f64,
    pub speed: f64,
    pub arc_length: f64,
}

/// A polyline reference path with per-sample heading and speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePath {
    pub samples: Vec<PathSample>,
}

impl ReferencePath {
    /// Index and Euclidean distance of the nearest path sample. Linear scan;
    /// exactness over speed at desk scale.
    pub fn nearest(&self, point: [f64; 2]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, s) in self.samples.iter().enumerate() {
            let dx = point[0] - s.pos[0];
            let dy = point[1] - s.pos[1];
            let d2 = dx * dx + dy * dy;
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    }

    pub fn end(&self) -> &PathSample {
        self.samples.last().expect("path has at least one sample")
    }

    pub fn total_length(&self) -> f64 {
        self.end().arc_length
    }
}

/// Straight line followed by a tangent-continuous semicircular arc, sampled
/// uniformly at `spacing` along arc length, constant reference speed. The
/// line starts at the origin heading +x; the arc turns left.
pub fn build_line_semicircle_path(
    line_length: f64,
    radius: f64,
    ref_speed: f64,
    spacing: f64,
) -> ReferencePath {
    assert!(
        line_length > 0.0 && radius > 0.0 && ref_speed > 0.0 && spacing > 0.0,
        "path parameters must be positive"
    );
    let total = line_length + PI * radius;
    let mut samples = Vec::new();
    let mut k = 0usize;
    loop {
        let s = k as f64 * spacing;
        if s > total {
            break;
        }
        samples.push(sample_at(s, line_length, radius, ref_speed));
        k += 1;
    }
    // Keep the exact endpoint so the arc length and goal are exact.
    if samples.last().map(|p| p.arc_length) != Some(total) {
        samples.push(sample_at(total, line_length, radius, ref_speed));
    }
    ReferencePath { samples }
}

fn sample_at(s: f64, line_length: f64, radius: f64, ref_speed: f64) -> PathSample {
    if s <= line_length {
        PathSample {
            pos: [s, 0.0],
            heading: 0.0,
            speed: ref_speed,
            arc_length: s,
        }
    } else {
        let phi = (s - line_length) / radius;
        PathSample {
            pos: [
                line_length + radius * phi.sin(),
                radius * (1.0 - phi.cos()),
            ],
            heading: phi,
            speed: ref_speed,
            arc_length: s,
        }
    }
}

/// Weights of the quadratic tracking cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub q_pos: f64,
    pub q_heading: f64,
    pub q_speed: f64,
    pub terminal_q_pos: f64,
    pub terminal_q_heading: f64,
    pub terminal_q_speed: f64,
    /// Control weighting of the formal problem statement. Required positive
    /// definite; the sampled cost-to-go replaces the quadratic control term
    /// with the covariance-scaled cross term, so these do not enter scoring.
    pub r_steer: f64,
    pub r_accel: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            q_pos: 2.0,
            q_heading: 8.0,
            q_speed: 1.2,
            terminal_q_pos: 10.0,
            terminal_q_heading: 20.0,
            terminal_q_speed: 2.0,
            r_steer: 1.0,
            r_accel: 1.0,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), String> {
        let weights = [
            self.q_pos,
            self.q_heading,
            self.q_speed,
            self.terminal_q_pos,
            self.terminal_q_heading,
            self.terminal_q_speed,
        ];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err("cost weights must be >= 0".to_string());
        }
        if !(self.r_steer > 0.0) || !(self.r_accel > 0.0) {
            return Err("control weighting R must be positive definite".to_string());
        }
        Ok(())
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(angle: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut a = angle % two_pi;
    if a <= -PI {
        a += two_pi;
    } else if a > PI {
        a -= two_pi;
    }
    a
}

fn tracking_cost(
    state: &VehicleState,
    path: &ReferencePath,
    q_pos: f64,
    q_heading: f64,
    q_speed: f64,
) -> f64 {
    let (idx, dist) = path.nearest(state.position());
    let sample = &path.samples[idx];
    let heading_err = wrap_angle(state.theta - sample.heading);
    q_pos * dist * dist + q_heading * heading_err * heading_err
        + q_speed * (state.v - sample.speed) * (state.v - sample.speed)
}

/// State-dependent running cost: squared distance to the nearest path
/// sample, wrapped heading error, and speed error.
pub fn running_cost(state: &VehicleState, path: &ReferencePath, costs: &CostParams) -> f64 {
    tracking_cost(state, path, costs.q_pos, costs.q_heading, costs.q_speed)
}

/// Terminal cost; same structure as the running cost with terminal weights.
pub fn terminal_cost(state: &VehicleState, path: &ReferencePath, costs: &CostParams) -> f64 {
    tracking_cost(
        state,
        path,
        costs.terminal_q_pos,
        costs.terminal_q_heading,
        costs.terminal_q_speed,
    )
}

/// Run-outcome classes, ordered by classification precedence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeClass {
    Success,
    FailStop,
    FailCollision,
}

/// Classified outcome plus the aggregate run metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub class: OutcomeClass,
    /// Number of executed control steps.
    pub steps: usize,
    /// Mean speed over all logged states (m/s).
    pub avg_speed: f64,
    /// Mean distance to the nearest path sample over all logged states (m).
    pub avg_pos_error: f64,
}

/// Termination thresholds of a closed-loop run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunLimits {
    /// Step budget.
    pub max_steps: usize,
    /// Stall speed threshold (m/s).
    pub v_stall: f64,
    /// Consecutive seconds below `v_stall` that count as a stall.
    pub t_stall: f64,
    /// Distance to the path end that counts as completion (m).
    pub completion_radius: f64,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self {
            max_steps: 600,
            v_stall: 0.3,
            t_stall: 3.0,
            completion_radius: 2.0,
        }
    }
}

impl RunLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0 {
            return Err("max_steps must be >= 1".to_string());
        }
        if !(self.v_stall >= 0.0) || !(self.t_stall > 0.0) || !(self.completion_radius > 0.0) {
            return Err("stall and completion thresholds must be positive".to_string());
        }
        Ok(())
    }

    /// Stall window measured in steps.
    pub fn stall_steps(&self, dt: f64) -> usize {
        (self.t_stall / dt).ceil() as usize
    }
}

/// Minimal view of an executed step used for outcome classification.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExecutedStep {
    pub state: VehicleState,
    pub min_margin: f64,
}

/// Classify an executed trajectory. Precedence is total: collision beats
/// stop beats success.
pub fn classify_outcome(
    steps: &[ExecutedStep],
    dt: f64,
    path: &ReferencePath,
    limits: &RunLimits,
) -> Outcome {
    assert!(!steps.is_empty(), "cannot classify an empty run");
    let n = steps.len();
    let avg_speed = steps.iter().map(|s| s.state.v).sum::<f64>() / n as f64;
    let avg_pos_error = steps
        .iter()
        .map(|s| path.nearest(s.state.position()).1)
        .sum::<f64>()
        / n as f64;

    let collided = steps.iter().any(|s| s.min_margin < 0.0);
    let class = if collided {
        OutcomeClass::FailCollision
    } else if stalled(steps, dt, limits) {
        OutcomeClass::FailStop
    } else {
        let last = steps.last().unwrap();
        let end = path.end();
        let dx = last.state.x - end.pos[0];
        let dy = last.state.y - end.pos[1];
        let reached = (dx * dx + dy * dy).sqrt() <= limits.completion_radius;
        if reached && n - 1 <= limits.max_steps {
            OutcomeClass::Success
        } else {
            OutcomeClass::FailStop
        }
    };

    Outcome {
        class,
        steps: n - 1,
        avg_speed,
        avg_pos_error,
    }
}

fn stalled(steps: &[ExecutedStep], dt: f64, limits: &RunLimits) -> bool {
    let window = limits.stall_steps(dt);
    let mut consecutive = 0usize;
    for s in steps {
        if s.state.v < limits.v_stall {
            consecutive += 1;
            if consecutive >= window {
                return true;
            }
        } else {
            consecutive = 0;
        }
    }
    false
}

/// Everything that defines one experiment world: vehicle, path, costs,
/// obstacles, barrier parameters, termination limits, and the start state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub vehicle: VehicleParams,
    pub start: VehicleState,
    pub path: ReferencePath,
    pub costs: CostParams,
    pub constraints: ConstraintSet,
    pub barrier: BarrierConfig,
    pub limits: RunLimits,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), String> {
        self.vehicle.validate()?;
        self.costs.validate()?;
        self.barrier.validate()?;
        self.limits.validate()?;
        for o in &self.constraints.obstacles {
            o.validate()?;
        }
        if self.path.samples.is_empty() {
            return Err("reference path must be non-empty".to_string());
        }
        if !self.start.is_finite() {
            return Err("start state must be finite".to_string());
        }
        Ok(())
    }

    /// Minimum constraint margin at a state, under this scenario's vehicle
    /// geometry and obstacles.
    pub fn min_margin(&self, state: &VehicleState) -> f64 {
        min_margin(state, &self.vehicle, &self.constraints)
    }
}
