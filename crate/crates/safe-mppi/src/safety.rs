//! Obstacle constraints, barrier functions, and the discrete barrier state
//! (DBaS) that embeds them into the vehicle dynamics.
//!
//! Constraint violation is represented by a `+inf` sentinel value rather
//! than an error: sampled unsafe trajectories receive infinite cost and
//! exactly zero weight in the exponential averaging, instead of aborting
//! the whole batch.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    shape_points, step_vehicle, DynamicsError, VehicleControl, VehicleParams, VehicleState,
};

/// A circular obstacle in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircularObstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl CircularObstacle {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.radius > 0.0) {
            return Err(format!("obstacle radius must be > 0, got {}", self.radius));
        }
        Ok(())
    }
}

/// The set of obstacle constraints. One constraint function exists per
/// (shape point, obstacle) pair; an empty set means free space.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub obstacles: Vec<CircularObstacle>,
}

impl ConstraintSet {
    pub fn new(obstacles: Vec<CircularObstacle>) -> Self {
        Self { obstacles }
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }
}

/// Functional form of the barrier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarrierKind {
    /// B(h) = 1/h. Nonnegative on the whole safe set.
    Inverse,
    /// B(h) = ln(1 + 1/h). Also nonnegative, grows slower far from the
    /// boundary.
    ShiftedLog,
}

/// Barrier function and barrier-state parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    pub kind: BarrierKind,
    /// Barrier-state gain, in [0, 1).
    pub gamma_bas: f64,
    /// Fused barrier value at the desired equilibrium. Zero models an
    /// equilibrium infinitely far from every obstacle, which turns the
    /// barrier-state update into a pure decaying-memory filter.
    pub beta_desired: f64,
    /// Margin floor below which the barrier is extended linearly, keeping
    /// near-boundary values finite-but-huge instead of overflowing.
    pub epsilon_h: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            kind: BarrierKind::Inverse,
            gamma_bas: 0.5,
            beta_desired: 0.0,
            epsilon_h: 1e-3,
        }
    }
}

impl BarrierConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.gamma_bas) {
            return Err(format!(
                "gamma_bas must be in [0, 1), got {}",
                self.gamma_bas
            ));
        }
        if !(self.beta_desired >= 0.0) {
            return Err(format!(
                "beta_desired must be >= 0, got {}",
                self.beta_desired
            ));
        }
        if !(self.epsilon_h > 0.0) {
            return Err(format!("epsilon_h must be > 0, got {}", self.epsilon_h));
        }
        Ok(())
    }
}

/// The vehicle state extended with the fused barrier state `w`.
///
/// `w` is finite exactly when every shape point strictly satisfies every
/// constraint at each state visited so far; a violated constraint maps to
/// the `+inf` sentinel and the sentinel propagates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub nominal: VehicleState,
    pub w: f64,
}

impl AugmentedState {
    /// Embed a vehicle state by evaluating the fused barrier at it.
    pub fn embed(
        state: &VehicleState,
        params: &VehicleParams,
        constraints: &ConstraintSet,
        config: &BarrierConfig,
    ) -> Self {
        Self {
            nominal: *state,
            w: fused_barrier(state, params, constraints, config),
        }
    }
}

/// Signed constraint margin of one point against one obstacle:
/// squared distance to the center minus squared radius. Positive is safe.
pub fn constraint_margin(point: [f64; 2], obstacle: &CircularObstacle) -> f64 {
    let dx = point[0] - obstacle.center[0];
    let dy = point[1] - obstacle.center[1];
    dx * dx + dy * dy - obstacle.radius * obstacle.radius
}

/// Minimum margin over all (shape point, obstacle) pairs at a state.
/// Returns `+inf` when the constraint set is empty.
pub fn min_margin(
    state: &VehicleState,
    params: &VehicleParams,
    constraints: &ConstraintSet,
) -> f64 {
    let pts = shape_points(state, params);
    let mut min = f64::INFINITY;
    for obstacle in &constraints.obstacles {
        for point in pts.iter() {
            let h = constraint_margin(point, obstacle);
            if h < min {
                min = h;
            }
        }
    }
    min
}

/// Barrier value of a single margin.
///
/// Non-positive margins map to the `+inf` sentinel. Margins in
/// `(0, epsilon_h)` are scored by the linear extension of the barrier with
/// the slope at `epsilon_h`, which preserves the ordering while keeping the
/// exponential weighting numerically usable.
pub fn barrier(h: f64, config: &BarrierConfig) -> f64 {
    if h <= 0.0 {
        return f64::INFINITY;
    }
    let eps = config.epsilon_h;
    match config.kind {
        BarrierKind::Inverse => {
            if h >= eps {
                1.0 / h
            } else {
                1.0 / eps + (eps - h) / (eps * eps)
            }
        }
        BarrierKind::ShiftedLog => {
            if h >= eps {
                (1.0 + 1.0 / h).ln()
            } else {
                (1.0 + 1.0 / eps).ln() + (eps - h) / (eps * (1.0 + eps))
            }
        }
    }
}

/// Sum of barrier values over a collection of margins; the multi-constraint
/// fusion. Any violated margin makes the sum the sentinel.
pub fn fuse_barrier_values<I>(margins: I, config: &BarrierConfig) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let mut sum = 0.0;
    for h in margins {
        let b = barrier(h, config);
        if !b.is_finite() {
            return f64::INFINITY;
        }
        sum += b;
    }
    sum
}

/// Fused barrier value of a state: barrier values summed over the full
/// (shape point x obstacle) constraint grid.
pub fn fused_barrier(
    state: &VehicleState,
    params: &VehicleParams,
    constraints: &ConstraintSet,
    config: &BarrierConfig,
) -> f64 {
    if constraints.is_empty() {
        return 0.0;
    }
    let pts = shape_points(state, params);
    let mut sum = 0.0;
    for obstacle in &constraints.obstacles {
        for point in pts.iter() {
            let b = barrier(constraint_margin(point, obstacle), config);
            if !b.is_finite() {
                return f64::INFINITY;
            }
            sum += b;
        }
    }
    sum
}

/// One update of the fused barrier state:
///
/// ```text
/// w_{k+1} = B.h(x_{k+1}) - gamma_bas * (beta_desired - w_k)
/// ```
///
/// where `B.h` is the fused multi-constraint barrier. A sentinel input or a
/// violated constraint at the next state yields the sentinel.
pub fn dbas_step(
    beta_k: f64,
    next_state: &VehicleState,
    params: &VehicleParams,
    constraints: &ConstraintSet,
    config: &BarrierConfig,
) -> f64 {
    if !beta_k.is_finite() {
        return f64::INFINITY;
    }
    let fused = fused_barrier(next_state, params, constraints, config);
    if !fused.is_finite() {
        return f64::INFINITY;
    }
    fused - config.gamma_bas * (config.beta_desired - beta_k)
}

/// One step of the safety-embedded system: the nominal part advances by the
/// vehicle dynamics, the barrier state advances by [`dbas_step`] evaluated
/// at the new nominal state.
pub fn augmented_step(
    state: &AugmentedState,
    control: &VehicleControl,
    params: &VehicleParams,
    constraints: &ConstraintSet,
    config: &BarrierConfig,
) -> Result<AugmentedState, DynamicsError> {
    let nominal = step_vehicle(&state.nominal, control, params)?;
    let w = dbas_step(state.w, &nominal, params, constraints, config);
    Ok(AugmentedState { nominal, w })
}
