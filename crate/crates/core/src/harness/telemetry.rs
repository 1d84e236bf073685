//! Telemetry frames and their CSV export.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::control::{RecoveryStrategy, ReservoirGauge};
use crate::error::{Error, Result};
use crate::sensor::ImuSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactSummary {
    pub active: bool,
    pub point_m: [f64; 3],
    pub penetration_m: f64,
    pub normal_force_n: f64,
    pub friction_force_n: [f64; 3],
    pub slip_speed_m_s: f64,
    pub rolling: bool,
    /// Absent while airborne.
    pub rolling_residual_m_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryStatus {
    pub voltage_v: f64,
    pub charge_ah: f64,
    pub state_of_charge: f64,
    pub current_a: f64,
    pub alive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandEcho {
    pub forward: f64,
    pub turn: f64,
    /// Timestamp the client attached to the command.
    pub timestamp_s: f64,
    pub recovering: Option<RecoveryStrategy>,
    /// Gimbal rates the controller asked for, before servo tracking.
    pub alpha_rate_rad_s: f64,
    pub beta_rate_rad_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyStatus {
    pub mechanical_j: f64,
    pub actuator_work_j: f64,
    pub dissipated_j: f64,
    pub balance_error_j: f64,
}

/// One snapshot of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub tick: u64,
    pub time_s: f64,
    pub position_m: [f64; 3],
    pub orientation_wxyz: [f64; 4],
    pub velocity_m_s: [f64; 3],
    pub angular_velocity_body_rad_s: [f64; 3],
    pub angular_velocity_world_rad_s: [f64; 3],
    pub alpha_rad: f64,
    pub beta_rad: f64,
    pub alpha_rate_rad_s: f64,
    pub beta_rate_rad_s: f64,
    pub rotor_speed_rad_s: f64,
    pub rotor_torque_nm: f64,
    pub servo_torque_nm: [f64; 2],
    pub imu_hull: ImuSample,
    pub imu_inner: ImuSample,
    pub attitude_estimate_wxyz: [f64; 4],
    pub contact: ContactSummary,
    pub rolling_axis: [f64; 3],
    pub reservoir: ReservoirGauge,
    pub gyro_torque_on_shell_nm: [f64; 3],
    pub battery: BatteryStatus,
    pub command: CommandEcho,
    pub energy: EnergyStatus,
}

impl TelemetryFrame {
    pub fn is_finite(&self) -> bool {
        csv_columns().iter().all(|c| match (c.get)(self) {
            Cell::Num(v) => v.is_finite(),
            _ => true,
        })
    }
}

enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

struct Column {
    name: String,
    get: Box<dyn Fn(&TelemetryFrame) -> Cell + Send + Sync>,
}

fn col(name: impl Into<String>, get: impl Fn(&TelemetryFrame) -> Cell + Send + Sync + 'static) -> Column {
    Column {
        name: name.into(),
        get: Box::new(get),
    }
}

fn vec3(
    out: &mut Vec<Column>,
    prefix: &str,
    unit: &str,
    get: impl Fn(&TelemetryFrame) -> [f64; 3] + Copy + Send + Sync + 'static,
) {
    for (i, axis) in ["x", "y", "z"].into_iter().enumerate() {
        let name = if unit.is_empty() {
            format!("{prefix}_{axis}")
        } else {
            format!("{prefix}_{axis}_{unit}")
        };
        out.push(col(name, move |f| Cell::Num(get(f)[i])));
    }
}

fn quat(out: &mut Vec<Column>, prefix: &str, get: impl Fn(&TelemetryFrame) -> [f64; 4] + Copy + Send + Sync + 'static) {
    for (i, c) in ["w", "x", "y", "z"].into_iter().enumerate() {
        out.push(col(format!("{prefix}_{c}"), move |f| Cell::Num(get(f)[i])));
    }
}

fn csv_columns() -> Vec<Column> {
    let mut c = vec![
        col("tick", |f| Cell::Int(f.tick)),
        col("time_s", |f| Cell::Num(f.time_s)),
    ];
    vec3(&mut c, "position", "m", |f| f.position_m);
    quat(&mut c, "orientation", |f| f.orientation_wxyz);
    vec3(&mut c, "velocity", "m_s", |f| f.velocity_m_s);
    vec3(&mut c, "angular_velocity_body", "rad_s", |f| f.angular_velocity_body_rad_s);
    vec3(&mut c, "angular_velocity_world", "rad_s", |f| f.angular_velocity_world_rad_s);
    c.extend([
        col("alpha_rad", |f| Cell::Num(f.alpha_rad)),
        col("beta_rad", |f| Cell::Num(f.beta_rad)),
        col("alpha_rate_rad_s", |f| Cell::Num(f.alpha_rate_rad_s)),
        col("beta_rate_rad_s", |f| Cell::Num(f.beta_rate_rad_s)),
        col("rotor_speed_rad_s", |f| Cell::Num(f.rotor_speed_rad_s)),
        col("rotor_torque_nm", |f| Cell::Num(f.rotor_torque_nm)),
        col("servo_1_torque_nm", |f| Cell::Num(f.servo_torque_nm[0])),
        col("servo_2_torque_nm", |f| Cell::Num(f.servo_torque_nm[1])),
    ]);
    vec3(&mut c, "imu_hull_gyro", "rad_s", |f| f.imu_hull.gyro_rad_s);
    vec3(&mut c, "imu_hull_accel", "m_s2", |f| f.imu_hull.accel_m_s2);
    vec3(&mut c, "imu_inner_gyro", "rad_s", |f| f.imu_inner.gyro_rad_s);
    vec3(&mut c, "imu_inner_accel", "m_s2", |f| f.imu_inner.accel_m_s2);
    quat(&mut c, "attitude_estimate", |f| f.attitude_estimate_wxyz);
    c.extend([
        col("contact_active", |f| Cell::Bool(f.contact.active)),
        col("contact_penetration_m", |f| Cell::Num(f.contact.penetration_m)),
        col("contact_normal_force_n", |f| Cell::Num(f.contact.normal_force_n)),
        col("contact_slip_speed_m_s", |f| Cell::Num(f.contact.slip_speed_m_s)),
        col("contact_rolling", |f| Cell::Bool(f.contact.rolling)),
        col("rolling_residual_m_s", |f| f.contact.rolling_residual_m_s.map_or(Cell::Empty, Cell::Num)),
    ]);
    vec3(&mut c, "contact_point", "m", |f| f.contact.point_m);
    vec3(&mut c, "rolling_axis", "", |f| f.rolling_axis);
    c.extend([
        col("reservoir_theta_rad", |f| Cell::Num(f.reservoir.theta_res_rad)),
        col("reservoir_fraction", |f| Cell::Num(f.reservoir.fraction)),
        col("rotor_stopped", |f| Cell::Bool(f.reservoir.rotor_stopped)),
    ]);
    vec3(&mut c, "gyro_torque_on_shell", "nm", |f| f.gyro_torque_on_shell_nm);
    c.extend([
        col("battery_voltage_v", |f| Cell::Num(f.battery.voltage_v)),
        col("battery_charge_ah", |f| Cell::Num(f.battery.charge_ah)),
        col("battery_current_a", |f| Cell::Num(f.battery.current_a)),
        col("battery_alive", |f| Cell::Bool(f.battery.alive)),
        col("command_forward", |f| Cell::Num(f.command.forward)),
        col("command_turn", |f| Cell::Num(f.command.turn)),
        col("command_timestamp_s", |f| Cell::Num(f.command.timestamp_s)),
        col("command_alpha_rate_rad_s", |f| Cell::Num(f.command.alpha_rate_rad_s)),
        col("command_beta_rate_rad_s", |f| Cell::Num(f.command.beta_rate_rad_s)),
        col("recovering", |f| {
            f.command.recovering.map_or(Cell::Empty, |r| {
                Cell::Text(serde_json::to_value(r).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
            })
        }),
        col("energy_mechanical_j", |f| Cell::Num(f.energy.mechanical_j)),
        col("energy_actuator_work_j", |f| Cell::Num(f.energy.actuator_work_j)),
        col("energy_dissipated_j", |f| Cell::Num(f.energy.dissipated_j)),
        col("energy_balance_error_j", |f| Cell::Num(f.energy.balance_error_j)),
    ]);
    c
}

/// Every column name `export_csv` accepts, in default order.
pub fn csv_column_names() -> Vec<String> {
    csv_columns().into_iter().map(|c| c.name).collect()
}

/// Write frames as CSV with a header row. `columns` selects and orders
/// columns; `None` writes all of them.
pub fn export_csv<W: Write>(frames: &[TelemetryFrame], columns: Option<&[String]>, out: W) -> Result<()> {
    let all = csv_columns();
    let selected: Vec<&Column> = match columns {
        None => all.iter().collect(),
        Some(names) => names
            .iter()
            .map(|n| {
                all.iter().find(|c| &c.name == n).ok_or_else(|| Error::UnknownColumn {
                    name: n.clone(),
                    valid: csv_column_names(),
                })
            })
            .collect::<Result<_>>()?,
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(selected.iter().map(|c| c.name.as_str()))?;
    for f in frames {
        w.write_record(selected.iter().map(|c| (c.get)(f).render()))?;
    }
    w.flush()?;
    Ok(())
}
