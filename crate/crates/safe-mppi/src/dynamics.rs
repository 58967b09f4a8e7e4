//! Discrete-time vehicle models: the Ackermann steering vehicle and the
//! shape points used for collision checking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors surfaced by the integrator. A non-finite state is almost always a
/// sign of an upstream numerical blow-up, so it is rejected loudly instead of
/// being propagated through rollouts.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("non-finite vehicle state")]
    NonFiniteState,
    #[error("non-finite vehicle state at rollout step {0}")]
    NonFiniteStateAtStep(usize),
}

/// Planar vehicle state: position, yaw, and longitudinal speed.
///
/// `theta` is stored unwrapped — no modular reduction happens inside the
/// dynamics, which keeps heading costs continuous across +/-pi.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleState {
    /// Position east (m).
    pub x: f64,
    /// Position north (m).
    pub y: f64,
    /// Yaw angle (rad), unwrapped.
    pub theta: f64,
    /// Longitudinal speed (m/s).
    pub v: f64,
}

impl VehicleState {
    pub const fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self { x, y, theta, v }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() && self.v.is_finite()
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Steering angle and longitudinal acceleration command.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleControl {
    /// Steering angle (rad).
    pub steer: f64,
    /// Longitudinal acceleration (m/s^2).
    pub accel: f64,
}

impl VehicleControl {
    pub const fn new(steer: f64, accel: f64) -> Self {
        Self { steer, accel }
    }
}

/// Geometry, timestep, and control bounds of the vehicle.
///
/// The box bounds `[-steer_max, steer_max] x [-accel_max, accel_max]` realize
/// the control-feasibility constraint of the optimization problem; sampled
/// controls are saturated to them before rollout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Wheelbase L (m).
    pub wheelbase: f64,
    /// Body length (m).
    pub length: f64,
    /// Body width (m).
    pub width: f64,
    /// Integration timestep (s).
    pub dt: f64,
    /// Steering bound (rad).
    pub steer_max: f64,
    /// Acceleration bound (m/s^2).
    pub accel_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.5,
            length: 4.0,
            width: 3.0,
            dt: 0.1,
            steer_max: 0.5,
            accel_max: 3.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.wheelbase > 0.0) {
            return Err(format!("wheelbase must be > 0, got {}", self.wheelbase));
        }
        if !(self.length > 0.0) {
            return Err(format!("length must be > 0, got {}", self.length));
        }
        if !(self.width > 0.0) {
            return Err(format!("width must be > 0, got {}", self.width));
        }
        if !(self.dt > 0.0) {
            return Err(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.steer_max > 0.0) || !(self.accel_max > 0.0) {
            return Err("control bounds must be > 0".to_string());
        }
        Ok(())
    }

    /// Clamp a control command into the box bounds.
    pub fn saturate(&self, control: VehicleControl) -> VehicleControl {
        VehicleControl {
            steer: control.steer.clamp(-self.steer_max, self.steer_max),
            accel: control.accel.clamp(-self.accel_max, self.accel_max),
        }
    }
}

/// Eight boundary points on the vehicle rectangle, world frame: the four
/// corners plus the midpoint of each side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapePointSet {
    pub points: [[f64; 2]; 8],
}

impl ShapePointSet {
    pub fn iter(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.points.iter().copied()
    }
}

/// One forward-Euler step of the Ackermann model:
///
/// ```text
/// x'      = x + v cos(theta) dt
/// y'      = y + v sin(theta) dt
/// theta'  = theta + v tan(steer) / L dt
/// v'      = v + a dt
/// ```
pub fn step_vehicle(
    state: &VehicleState,
    control: &VehicleControl,
    params: &VehicleParams,
) -> Result<VehicleState, DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    let dt = params.dt;
    Ok(VehicleState {
        x: state.x + state.v * state.theta.cos() * dt,
        y: state.y + state.v * state.theta.sin() * dt,
        theta: state.theta + state.v * control.steer.tan() / params.wheelbase * dt,
        v: state.v + control.accel * dt,
    })
}

/// Shape points of the body rectangle at the given pose. The rectangle is
/// centered on (x, y) and rotated by theta; point order is fixed (corners
/// first, then side midpoints).
pub fn shape_points(state: &VehicleState, params: &VehicleParams) -> ShapePointSet {
    let hl = params.length / 2.0;
    let hw = params.width / 2.0;
    let local: [[f64; 2]; 8] = [
        [hl, hw],
        [hl, -hw],
        [-hl, hw],
        [-hl, -hw],
        [hl, 0.0],
        [-hl, 0.0],
        [0.0, hw],
        [0.0, -hw],
    ];
    let (sin, cos) = state.theta.sin_cos();
    let mut points = [[0.0; 2]; 8];
    for (out, p) in points.iter_mut().zip(local.iter()) {
        out[0] = state.x + cos * p[0] - sin * p[1];
        out[1] = state.y + sin * p[0] + cos * p[1];
    }
    ShapePointSet { points }
}

/// Iterate the dynamics over a control sequence. Returns the N+1 visited
/// states, starting with `initial`.
pub fn rollout(
    initial: &VehicleState,
    controls: &[VehicleControl],
    params: &VehicleParams,
) -> Result<Vec<VehicleState>, DynamicsError> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*initial);
    for (k, control) in controls.iter().enumerate() {
        let next = step_vehicle(states.last().unwrap(), control, params)
            .map_err(|_| DynamicsError::NonFiniteStateAtStep(k))?;
        states.push(next);
    }
    Ok(states)
}
