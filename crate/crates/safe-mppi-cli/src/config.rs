//! The scenario config file: a single versioned TOML document describing
//! the vehicle, world, costs, controller, and batch plan of an experiment.
//! Unknown keys are rejected so a config reviews as complete provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use safe_mppi::controller::{ControlMode, ControllerConfig};
use safe_mppi::dynamics::{VehicleParams, VehicleState};
use safe_mppi::safety::{BarrierConfig, CircularObstacle, ConstraintSet};
use safe_mppi::scenario::{build_line_semicircle_path, CostParams, RunLimits, Scenario};
use safe_mppi::simharness::ModeSpec;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Line-plus-semicircle reference path parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub line_length: f64,
    pub radius: f64,
    pub ref_speed: f64,
    pub spacing: f64,
}

impl PathSpec {
    fn validate(&self) -> Result<(), String> {
        let fields = [
            ("line_length", self.line_length),
            ("radius", self.radius),
            ("ref_speed", self.ref_speed),
            ("spacing", self.spacing),
        ];
        for (name, value) in fields {
            if !(value > 0.0) {
                return Err(format!("path.{name} must be > 0, got {value}"));
            }
        }
        Ok(())
    }
}

/// Seeds and controller modes of a batch comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    pub seeds: Vec<u64>,
    pub modes: Vec<ControlMode>,
}

/// The whole experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfigFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub vehicle: VehicleParams,
    pub start: VehicleState,
    pub path: PathSpec,
    #[serde(default)]
    pub obstacles: Vec<CircularObstacle>,
    pub costs: CostParams,
    pub barrier: BarrierConfig,
    pub limits: RunLimits,
    pub controller: ControllerConfig,
    pub batch: BatchSpec,
}

impl ScenarioConfigFile {
    /// Parse and validate a config file. Parse failures carry the TOML
    /// line/field diagnostics.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let config: ScenarioConfigFile = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.path.validate().map_err(CliError::Config)?;
        self.controller
            .validate()
            .map_err(|e| CliError::Config(format!("controller: {e}")))?;
        self.scenario()
            .validate()
            .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        if self.batch.modes.is_empty() {
            return Err(CliError::Config("batch.modes must not be empty".to_string()));
        }
        if self.batch.seeds.is_empty() {
            return Err(CliError::Config("batch.seeds must not be empty".to_string()));
        }
        Ok(())
    }

    /// Materialize the world description.
    pub fn scenario(&self) -> Scenario {
        Scenario {
            vehicle: self.vehicle,
            start: self.start,
            path: build_line_semicircle_path(
                self.path.line_length,
                self.path.radius,
                self.path.ref_speed,
                self.path.spacing,
            ),
            costs: self.costs,
            constraints: ConstraintSet::new(self.obstacles.clone()),
            barrier: self.barrier,
            limits: self.limits,
        }
    }

    /// Controller configuration with the mode switched.
    pub fn controller_for(&self, mode: ControlMode) -> ControllerConfig {
        ControllerConfig {
            mode,
            ..self.controller.clone()
        }
    }

    /// Labeled mode specs for a batch over the given modes.
    pub fn mode_specs(&self, modes: &[ControlMode]) -> Result<Vec<ModeSpec>, CliError> {
        let mut specs: Vec<ModeSpec> = Vec::new();
        for mode in modes {
            if specs.iter().any(|s| s.label == mode.label()) {
                return Err(CliError::Config(format!(
                    "duplicate mode '{}' in batch",
                    mode.label()
                )));
            }
            specs.push(ModeSpec::new(self.controller_for(*mode)));
        }
        Ok(specs)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
