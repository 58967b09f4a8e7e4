//! Sampling-based model predictive control with barrier-state safety
//! embedding and adaptive exploration, plus the closed-loop vehicle
//! simulator and batch harness used to benchmark it.
//!
//! The crate is organized around the data flow of one control step:
//!
//! * [`dynamics`] — discrete-time Ackermann vehicle model and its
//!   collision shape points.
//! * [`safety`] — obstacle constraints, barrier functions, and the
//!   discrete barrier state that embeds them into the dynamics.
//! * [`scenario`] — reference paths, tracking costs, and run-outcome
//!   classification.
//! * [`controller`] — the MPPI optimizer: perturbation sampling,
//!   parallel rollouts, exponentially weighted updates, Savitzky-Golay
//!   smoothing, warm starting, and the adaptive exploration rate.
//! * [`simharness`] — closed-loop episodes, seeded batches, and
//!   aggregate statistics.
//! * [`presets`] — the shipped obstacle-gauntlet benchmark.

// Validations are written as `!(x > 0.0)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod dynamics;
pub mod presets;
pub mod safety;
pub mod scenario;
pub mod simharness;
