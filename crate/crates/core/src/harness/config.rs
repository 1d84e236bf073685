//! Scenario files.
//!
//! A scenario is TOML. Every section is a partial override of a default
//! value: the robot section overrides the named parameter preset, `ground`
//! overrides a plane tuned for the resolved robot, `initial` overrides a
//! resting pose with the gimbal at home and the rotor at its setpoint, and
//! so on. Unknown keys are errors. See `docs/scenario.md` for the schema.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::contact::{ellipsoid_support_point, GroundPlane};
use crate::control::{home_state, ControllerConfig, RecoveryStrategy};
use crate::dynamics::{RobotParams, RobotState, StateRecord};
use crate::error::{Error, Result};
use crate::power::{BatteryPack, RegulatorChain};
use crate::sensor::ImuMount;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Scripted,
    Teleop,
}

/// One entry of a command script. The command holds until the next entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCommand {
    pub t_s: f64,
    #[serde(default)]
    pub forward: f64,
    #[serde(default)]
    pub turn: f64,
    /// Start a recovery maneuver at this time instead of driving.
    #[serde(default)]
    pub recover: Option<RecoveryStrategy>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// JSON-lines run log, relative to the output directory.
    pub log: Option<String>,
    /// Optional CSV export of the telemetry frames.
    pub csv: Option<String>,
    /// CSV columns; all columns when absent.
    pub csv_columns: Option<Vec<String>>,
}

pub const DEFAULT_DT_S: f64 = 1e-4;
pub const DEFAULT_TELEOP_DT_S: f64 = 1e-3;
pub const DEFAULT_TELEMETRY_HZ: f64 = 50.0;
pub const MAX_DT_S: f64 = 1e-2;

/// A scenario file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_robot")]
    pub robot: String,
    #[serde(default)]
    pub robot_overrides: Table,
    #[serde(default)]
    pub ground: Table,
    #[serde(default)]
    pub initial: Table,
    #[serde(default)]
    pub mode: Mode,
    pub duration_s: f64,
    /// Defaults to [`DEFAULT_DT_S`], or [`DEFAULT_TELEOP_DT_S`] in teleop mode.
    #[serde(default)]
    pub dt_s: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_telemetry")]
    pub telemetry_rate_hz: f64,
    #[serde(default)]
    pub controller: Table,
    #[serde(default)]
    pub battery: Table,
    #[serde(default)]
    pub imu_hull: Table,
    #[serde(default)]
    pub imu_inner: Table,
    /// Add sensor noise to IMU readings.
    #[serde(default = "yes")]
    pub imu_noise: bool,
    #[serde(default)]
    pub commands: Vec<ScriptedCommand>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_robot() -> String {
    "proto1".into()
}
fn default_telemetry() -> f64 {
    DEFAULT_TELEMETRY_HZ
}
fn yes() -> bool {
    true
}

/// Everything a run needs, resolved and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: RobotParams,
    pub ground: Option<GroundPlane>,
    pub initial: RobotState,
    pub mode: Mode,
    pub duration_s: f64,
    pub dt_s: f64,
    pub seed: u64,
    pub telemetry_rate_hz: f64,
    pub controller: ControllerConfig,
    pub battery: BatteryPack,
    pub chain: RegulatorChain,
    pub imu_hull: ImuMount,
    pub imu_inner: ImuMount,
    pub commands: Vec<ScriptedCommand>,
    pub output: OutputConfig,
    /// SHA-256 of the canonical config, hex.
    pub config_hash: String,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// Hash of the canonical serialization, so formatting and comments do
    /// not change it.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(&canonical))
    }

    /// Validate everything and build the run inputs. All problems found are
    /// reported together.
    pub fn dt(&self) -> f64 {
        self.dt_s.unwrap_or(match self.mode {
            Mode::Scripted => DEFAULT_DT_S,
            Mode::Teleop => DEFAULT_TELEOP_DT_S,
        })
    }

    pub fn resolve(&self) -> Result<Scenario> {
        let mut problems = Vec::new();

        let dt_s = self.dt();
        if !(dt_s > 0.0 && dt_s <= MAX_DT_S) {
            problems.push(format!("dt_s must lie in (0, {MAX_DT_S}], got {dt_s}"));
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            problems.push(format!("duration_s must be non-negative, got {}", self.duration_s));
        }
        if !(self.telemetry_rate_hz > 0.0 && self.telemetry_rate_hz.is_finite()) {
            problems.push(format!("telemetry_rate_hz must be positive, got {}", self.telemetry_rate_hz));
        } else if dt_s > 0.0 && self.telemetry_rate_hz * dt_s > 1.0 {
            problems.push(format!(
                "telemetry_rate_hz {} is faster than the step rate {}",
                self.telemetry_rate_hz,
                1.0 / dt_s
            ));
        }
        if self.mode == Mode::Scripted && self.seed.is_none() {
            problems.push("seed is required in scripted mode".into());
        }
        let mut last_t = f64::NEG_INFINITY;
        for (i, c) in self.commands.iter().enumerate() {
            if !c.t_s.is_finite() || c.t_s < 0.0 {
                problems.push(format!("commands[{i}].t_s must be a non-negative time, got {}", c.t_s));
            }
            if c.t_s < last_t {
                problems.push(format!("commands[{i}] is earlier than the entry before it"));
            }
            last_t = c.t_s;
            for (name, v) in [("forward", c.forward), ("turn", c.turn)] {
                if !(v.abs() <= 1.0) {
                    problems.push(format!("commands[{i}].{name} must lie in [-1, 1], got {v}"));
                }
            }
        }

        let params = match RobotParams::preset(&self.robot) {
            Ok(base) => merged(&base, &self.robot_overrides, "robot_overrides", &mut problems),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        };
        if let Some(p) = &params {
            collect(p.validate(), &mut problems);
        }

        let ground_enabled = match self.ground.get("enabled") {
            None => true,
            Some(Value::Boolean(b)) => *b,
            Some(other) => {
                problems.push(format!("ground.enabled must be a boolean, got {other}"));
                true
            }
        };
        let mut ground_overrides = self.ground.clone();
        ground_overrides.remove("enabled");
        let ground = match &params {
            Some(p) if ground_enabled => {
                let g = merged(&GroundPlane::for_robot(p), &ground_overrides, "ground", &mut problems);
                if let Some(g) = &g {
                    collect(g.validate(), &mut problems);
                }
                g.map(Some)
            }
            _ => Some(None),
        };

        let controller = merged(&ControllerConfig::default(), &self.controller, "controller", &mut problems);
        if let Some(c) = &controller {
            collect(c.validate(), &mut problems);
        }

        let initial = match (&params, &controller, &ground) {
            (Some(p), Some(c), Some(g)) => {
                resolve_initial(p, c, g.as_ref(), &self.initial, &mut problems)
            }
            _ => None,
        };

        let battery = merged(&BatteryPack::default(), &self.battery, "battery", &mut problems);
        let chain = RegulatorChain::default();
        if let Some(b) = &battery {
            collect(b.validate(), &mut problems);
            collect(chain.validate(b), &mut problems);
        }
        let noise = |m: ImuMount| if self.imu_noise { m } else { m.noiseless() };
        let imu_hull = merged(&noise(ImuMount::hull()), &self.imu_hull, "imu_hull", &mut problems);
        let imu_inner = merged(&noise(ImuMount::inner_ring()), &self.imu_inner, "imu_inner", &mut problems);
        for m in imu_hull.iter().chain(imu_inner.iter()) {
            collect(m.validate(), &mut problems);
        }

        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let unwrap = |what: &str| Error::Config(vec![format!("could not resolve {what}")]);
        Ok(Scenario {
            params: params.ok_or_else(|| unwrap("robot"))?,
            ground: ground.ok_or_else(|| unwrap("ground"))?,
            initial: initial.ok_or_else(|| unwrap("initial"))?,
            mode: self.mode,
            duration_s: self.duration_s,
            dt_s,
            seed: self.seed.unwrap_or(0),
            telemetry_rate_hz: self.telemetry_rate_hz,
            controller: controller.ok_or_else(|| unwrap("controller"))?,
            battery: battery.ok_or_else(|| unwrap("battery"))?,
            chain,
            imu_hull: imu_hull.ok_or_else(|| unwrap("imu_hull"))?,
            imu_inner: imu_inner.ok_or_else(|| unwrap("imu_inner"))?,
            commands: self.commands.clone(),
            output: self.output.clone(),
            config_hash: self.hash(),
        })
    }
}

fn collect(r: Result<()>, problems: &mut Vec<String>) {
    match r {
        Ok(()) => {}
        Err(Error::Config(list)) => problems.extend(list),
        Err(e) => problems.push(e.to_string()),
    }
}

/// Keys in `overrides` that do not exist in `base`, as dotted paths.
fn unknown_keys(base: &Table, overrides: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in overrides {
        let path = format!("{prefix}.{k}");
        match (base.get(k), v) {
            (None, _) => out.push(format!("unknown key `{path}`")),
            (Some(Value::Table(b)), Value::Table(o)) => unknown_keys(b, o, &path, out),
            _ => {}
        }
    }
}

fn merge_into(base: &mut Table, overrides: &Table) {
    for (k, v) in overrides {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge_into(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// `base` with `overrides` applied, or `None` after recording problems.
pub(crate) fn merged<T: Serialize + DeserializeOwned>(
    base: &T,
    overrides: &Table,
    section: &str,
    problems: &mut Vec<String>,
) -> Option<T> {
    let mut table = match Value::try_from(base) {
        Ok(Value::Table(t)) => t,
        _ => {
            problems.push(format!("{section}: default does not serialize as a table"));
            return None;
        }
    };
    let before = problems.len();
    unknown_keys(&table, overrides, section, problems);
    if problems.len() > before {
        return None;
    }
    merge_into(&mut table, overrides);
    match Value::Table(table).try_into::<T>() {
        Ok(v) => Some(v),
        Err(e) => {
            problems.push(format!("{section}: {e}"));
            None
        }
    }
}

/// Default start: gimbal home, rotor at setpoint, resting on the ground at
/// its static penetration (or at the origin with no ground).
fn resolve_initial(
    params: &RobotParams,
    controller: &ControllerConfig,
    ground: Option<&GroundPlane>,
    overrides: &Table,
    problems: &mut Vec<String>,
) -> Option<RobotState> {
    let home = StateRecord::from(&home_state(controller));
    let record = merged(&home, overrides, "initial", problems)?;
    let mut state = match RobotState::try_from(&record) {
        Ok(s) => s,
        Err(e) => {
            problems.push(format!("initial: {e}"));
            return None;
        }
    };
    if let (Some(g), false) = (ground, overrides.contains_key("position_m")) {
        let n = g.normal();
        let Ok(low) = ellipsoid_support_point(params.semi_axes_m, &state.orientation, &nalgebra::Vector3::zeros(), &-n) else {
            problems.push("initial: cannot place the shell on the ground".into());
            return None;
        };
        let weight_along_n = -params.total_mass() * params.gravity().dot(&n);
        let sag = weight_along_n.max(0.0) / g.stiffness_n_m;
        state.position = n * (g.height_m - n.dot(&low) - sag);
    }
    Some(state)
}
