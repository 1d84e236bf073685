//! Battery pack, regulator rails and load bookkeeping.

use serde::{Deserialize, Serialize};

use crate::dynamics::RobotParams;
use crate::error::{Error, Result};
use crate::gear::ROTOR_SETPOINT_RAD_S;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryPack {
    pub cells_series: u32,
    /// Nominal cell voltage, used for the energy rating.
    pub cell_voltage_v: f64,
    pub cell_capacity_ah: f64,
    pub charge_ah: f64,
    pub cell_full_v: f64,
    pub cell_empty_v: f64,
    pub protection_cutoff_v: f64,
}

impl Default for BatteryPack {
    fn default() -> Self {
        Self {
            cells_series: 7,
            cell_voltage_v: 3.7,
            cell_capacity_ah: 2.6,
            charge_ah: 2.6,
            cell_full_v: 4.2,
            cell_empty_v: 3.0,
            protection_cutoff_v: 21.0,
        }
    }
}

impl BatteryPack {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.cells_series == 0 {
            problems.push("battery needs at least one cell".into());
        }
        if !(self.cell_capacity_ah > 0.0) {
            problems.push("cell capacity must be positive".into());
        }
        if !(self.charge_ah >= 0.0 && self.charge_ah <= self.cell_capacity_ah) {
            problems.push(format!(
                "charge {} Ah outside [0, {}]",
                self.charge_ah, self.cell_capacity_ah
            ));
        }
        if !(self.cell_empty_v > 0.0 && self.cell_full_v > self.cell_empty_v) {
            problems.push("cell voltage curve must rise from empty to full".into());
        }
        if !(self.protection_cutoff_v >= 0.0) {
            problems.push("cutoff voltage must be non-negative".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn state_of_charge(&self) -> f64 {
        (self.charge_ah / self.cell_capacity_ah).clamp(0.0, 1.0)
    }

    /// Open-circuit pack voltage, affine in state of charge.
    pub fn voltage(&self) -> f64 {
        let cell = self.cell_empty_v + (self.cell_full_v - self.cell_empty_v) * self.state_of_charge();
        cell * f64::from(self.cells_series)
    }

    pub fn nominal_energy_wh(&self) -> f64 {
        f64::from(self.cells_series) * self.cell_voltage_v * self.cell_capacity_ah
    }

    pub fn alive(&self) -> bool {
        self.charge_ah > 0.0 && self.voltage() > self.protection_cutoff_v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RailKind {
    /// Input current equals output current; headroom is burnt.
    Linear,
    Buck { efficiency: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rail {
    pub name: String,
    pub output_v: f64,
    pub kind: RailKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulatorChain {
    pub rails: Vec<Rail>,
}

pub const RAIL_SERVO_1: usize = 0;
pub const RAIL_SERVO_2: usize = 1;
pub const RAIL_LOGIC: usize = 2;

impl Default for RegulatorChain {
    fn default() -> Self {
        let servo = |name: &str| Rail {
            name: name.into(),
            output_v: 12.0,
            kind: RailKind::Linear,
        };
        Self {
            rails: vec![
                servo("servo_1"),
                servo("servo_2"),
                Rail {
                    name: "logic".into(),
                    output_v: 5.0,
                    kind: RailKind::Buck { efficiency: 0.8 },
                },
            ],
        }
    }
}

impl RegulatorChain {
    pub fn validate(&self, pack: &BatteryPack) -> Result<()> {
        let mut problems = Vec::new();
        let floor = pack.protection_cutoff_v.max(pack.cell_empty_v * f64::from(pack.cells_series));
        for rail in &self.rails {
            if !(rail.output_v > 0.0) {
                problems.push(format!("rail {}: output voltage must be positive", rail.name));
            }
            match rail.kind {
                RailKind::Linear if rail.output_v >= floor => problems.push(format!(
                    "rail {}: linear output {} V not below minimum pack voltage {} V",
                    rail.name, rail.output_v, floor
                )),
                RailKind::Buck { efficiency } if !(efficiency > 0.0 && efficiency <= 1.0) => {
                    problems.push(format!("rail {}: efficiency {efficiency} outside (0, 1]", rail.name))
                }
                _ => {}
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

pub const MOTOR_EFFICIENCY: f64 = 0.7;
pub const MOTOR_IDLE_W: f64 = 3.0;
pub const SERVO_RATED_CURRENT_A: f64 = 1.5;
pub const SERVO_IDLE_CURRENT_A: f64 = 0.1;
pub const LOGIC_CURRENT_A: f64 = 0.5;

/// Electrical draw of the rotor motor for a given shaft power. Regenerative
/// power is not recovered.
pub fn motor_electrical_power_w(mechanical_w: f64) -> f64 {
    mechanical_w.max(0.0) / MOTOR_EFFICIENCY + MOTOR_IDLE_W
}

/// Servo supply current at a fraction of stall torque.
pub fn servo_current_a(torque_fraction: f64) -> f64 {
    SERVO_IDLE_CURRENT_A + (SERVO_RATED_CURRENT_A - SERVO_IDLE_CURRENT_A) * torque_fraction.abs().min(1.0)
}

/// Shaft power needed to hold the rotor at its setpoint against drag.
pub fn steady_rotor_power_w(params: &RobotParams) -> f64 {
    params.rotor_drag_nms_per_rad * ROTOR_SETPOINT_RAD_S * ROTOR_SETPOINT_RAD_S
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LoadProfile {
    /// Output current per rail, in chain order.
    pub rail_currents_a: Vec<f64>,
    /// Electrical power drawn straight from the pack by the rotor motor.
    pub motor_power_w: f64,
}

impl LoadProfile {
    /// Rotor running, servos unpowered, logic on.
    pub fn dc_motor_only(params: &RobotParams) -> Self {
        Self {
            rail_currents_a: vec![0.0, 0.0, LOGIC_CURRENT_A],
            motor_power_w: motor_electrical_power_w(steady_rotor_power_w(params)),
        }
    }

    /// Rotor running and both servos at rated current.
    pub fn full_actuation(params: &RobotParams) -> Self {
        Self {
            rail_currents_a: vec![SERVO_RATED_CURRENT_A, SERVO_RATED_CURRENT_A, LOGIC_CURRENT_A],
            ..Self::dc_motor_only(params)
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            rail_currents_a: self.rail_currents_a.iter().map(|i| i * k).collect(),
            motor_power_w: self.motor_power_w * k,
        }
    }

    fn validate(&self, chain: &RegulatorChain) -> Result<()> {
        if self.rail_currents_a.len() > chain.rails.len() {
            return Err(Error::InvalidParameter(format!(
                "load names {} rails but the chain has {}",
                self.rail_currents_a.len(),
                chain.rails.len()
            )));
        }
        let all = self.rail_currents_a.iter().chain(std::iter::once(&self.motor_power_w));
        if all.clone().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("load profile".into()));
        }
        if all.into_iter().any(|x| *x < 0.0) {
            return Err(Error::InvalidParameter("negative load".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStep {
    pub pack: BatteryPack,
    pub pack_current_a: f64,
    pub alive: bool,
    /// Power leaving the pack.
    pub pack_power_w: f64,
    /// Power reaching the loads.
    pub delivered_w: f64,
    /// Regulator loss per rail.
    pub rail_losses_w: Vec<f64>,
}

fn pack_draw(pack_v: f64, chain: &RegulatorChain, load: &LoadProfile) -> (f64, f64, Vec<f64>) {
    let mut current = load.motor_power_w / pack_v;
    let mut delivered = load.motor_power_w;
    let mut losses = vec![0.0; chain.rails.len()];
    for (k, (rail, &i_out)) in chain.rails.iter().zip(&load.rail_currents_a).enumerate() {
        let p_out = rail.output_v * i_out;
        delivered += p_out;
        match rail.kind {
            RailKind::Linear => {
                current += i_out;
                losses[k] = (pack_v - rail.output_v) * i_out;
            }
            RailKind::Buck { efficiency } => {
                current += p_out / (pack_v * efficiency);
                losses[k] = p_out * (1.0 / efficiency - 1.0);
            }
        }
    }
    (current, delivered, losses)
}

/// Advance the pack by `dt` under a constant load. The voltage used for the
/// step is the one at its start.
pub fn power_step(pack: &BatteryPack, chain: &RegulatorChain, load: &LoadProfile, dt: f64) -> Result<PowerStep> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("power step dt must be positive, got {dt}")));
    }
    load.validate(chain)?;
    let v = pack.voltage();
    let (current, delivered, losses) = pack_draw(v, chain, load);
    let mut next = pack.clone();
    if pack.alive() {
        next.charge_ah = (pack.charge_ah - current * dt / 3600.0).max(0.0);
    }
    Ok(PowerStep {
        alive: next.alive(),
        pack: next,
        pack_current_a: current,
        pack_power_w: v * current,
        delivered_w: delivered,
        rail_losses_w: losses,
    })
}

/// Minutes until empty at the current draw, or `None` when nothing is drawn.
pub fn runtime_estimate(pack: &BatteryPack, chain: &RegulatorChain, load: &LoadProfile) -> Result<Option<f64>> {
    load.validate(chain)?;
    let (current, _, _) = pack_draw(pack.voltage(), chain, load);
    if current <= 0.0 {
        return Ok(None);
    }
    Ok(Some(pack.charge_ah / current * 60.0))
}

/// Step a constant load until the pack trips, returning minutes.
pub fn simulate_runtime(pack: &BatteryPack, chain: &RegulatorChain, load: &LoadProfile, dt: f64) -> Result<Option<f64>> {
    if runtime_estimate(pack, chain, load)?.is_none() {
        return Ok(None);
    }
    let mut pack = pack.clone();
    let mut t = 0.0;
    while pack.alive() {
        pack = power_step(&pack, chain, load, dt)?.pack;
        t += dt;
    }
    Ok(Some(t / 60.0))
}
