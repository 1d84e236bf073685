//! Servo-to-gimbal transmission, spherical bevel-gear sizing, and the
//! servo / rotor actuator models.
//!
//! The two servos sit on the shell's main axis and drive the gimbal through
//! a differential bevel set: moving them together turns one gimbal ring,
//! moving them against each other turns the other. Which ring is which
//! depends on [`Convention`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Which gimbal ring responds to common-mode servo motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `alpha = (g1 + g2) / 2`, `beta = (g1 - g2) / 2`: equal servo motion turns
    /// the outer ring.
    #[default]
    OuterCommon,
    /// Equal servo motion turns the inner ring, opposite motion the outer ring.
    InnerCommon,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GimbalAngles {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_rate: f64,
    pub beta_rate: f64,
}

impl GimbalAngles {
    pub fn new(alpha: f64, beta: f64, alpha_rate: f64, beta_rate: f64) -> Self {
        Self {
            alpha: wrap_angle(alpha),
            beta: wrap_angle(beta),
            alpha_rate,
            beta_rate,
        }
    }
}

/// Servo shaft positions. These are multi-turn positions and are not wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ServoAngles {
    pub gamma_s1: f64,
    pub gamma_s2: f64,
    pub gamma_s1_rate: f64,
    pub gamma_s2_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GearTrainSpec {
    pub r_m: f64,
    pub teeth_big: u32,
    pub teeth_small: u32,
    /// Multiplier on the inner-gimbal row of the transmission.
    pub inner_drive_ratio: f64,
    #[serde(default)]
    pub convention: Convention,
}

impl Default for GearTrainSpec {
    fn default() -> Self {
        Self {
            r_m: 0.05,
            teeth_big: 48,
            teeth_small: 23,
            inner_drive_ratio: 1.0,
            convention: Convention::OuterCommon,
        }
    }
}

impl GearTrainSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.r_m > 0.0) {
            problems.push(format!("gear radius must be positive, got {}", self.r_m));
        }
        if self.teeth_big == 0 || self.teeth_small == 0 {
            problems.push("tooth counts must be positive".to_string());
        } else {
            if gcd(self.teeth_big, self.teeth_small) != 1 {
                problems.push(format!(
                    "tooth counts {}:{} are not coprime",
                    self.teeth_big, self.teeth_small
                ));
            }
            let err = (self.teeth_small as f64 / self.teeth_big as f64 - ideal_gear_ratio()).abs();
            if err >= 0.005 {
                problems.push(format!("tooth ratio off the ideal bevel ratio by {err:.6}"));
            }
        }
        if !(self.inner_drive_ratio.is_finite() && self.inner_drive_ratio != 0.0) {
            problems.push(format!("inner drive ratio must be finite and non-zero, got {}", self.inner_drive_ratio));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn tooth_ratio(&self) -> f64 {
        self.teeth_small as f64 / self.teeth_big as f64
    }

    /// `(outer, inner)` from `(s1, s2)`, shared by angles, rates and torques'
    /// transposes.
    fn forward(&self, s1: f64, s2: f64) -> (f64, f64) {
        let common = 0.5 * (s1 + s2);
        let diff = 0.5 * (s1 - s2);
        match self.convention {
            Convention::OuterCommon => (common, self.inner_drive_ratio * diff),
            Convention::InnerCommon => (diff, self.inner_drive_ratio * common),
        }
    }

    fn inverse(&self, alpha: f64, beta: f64) -> (f64, f64) {
        let (common, diff) = match self.convention {
            Convention::OuterCommon => (alpha, beta / self.inner_drive_ratio),
            Convention::InnerCommon => (beta / self.inner_drive_ratio, alpha),
        };
        (common + diff, common - diff)
    }

    /// Gimbal-axis torques equivalent (by virtual work) to the given servo
    /// shaft torques.
    pub fn servo_torques_to_gimbal(&self, tau_s1: f64, tau_s2: f64) -> (f64, f64) {
        // tau_gimbal = T^-T tau_servo, with servo = T^-1 gimbal
        let (a1, b1) = self.inverse(1.0, 0.0);
        let (a2, b2) = self.inverse(0.0, 1.0);
        (a1 * tau_s1 + b1 * tau_s2, a2 * tau_s1 + b2 * tau_s2)
    }

    /// Servo shaft torques that hold the given gimbal-axis torques.
    pub fn gimbal_torques_to_servo(&self, tau_alpha: f64, tau_beta: f64) -> (f64, f64) {
        let (a1, b1) = self.forward(1.0, 0.0);
        let (a2, b2) = self.forward(0.0, 1.0);
        (a1 * tau_alpha + b1 * tau_beta, a2 * tau_alpha + b2 * tau_beta)
    }
}

pub fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn servo_to_gimbal(servos: &ServoAngles, spec: &GearTrainSpec) -> Result<GimbalAngles> {
    ensure_finite(
        "servo angles",
        &[servos.gamma_s1, servos.gamma_s2, servos.gamma_s1_rate, servos.gamma_s2_rate],
    )?;
    let (alpha, beta) = spec.forward(servos.gamma_s1, servos.gamma_s2);
    let (alpha_rate, beta_rate) = spec.forward(servos.gamma_s1_rate, servos.gamma_s2_rate);
    Ok(GimbalAngles::new(alpha, beta, alpha_rate, beta_rate))
}

pub fn gimbal_to_servo(gimbal: &GimbalAngles, spec: &GearTrainSpec) -> Result<ServoAngles> {
    ensure_finite(
        "gimbal angles",
        &[gimbal.alpha, gimbal.beta, gimbal.alpha_rate, gimbal.beta_rate],
    )?;
    let (gamma_s1, gamma_s2) = spec.inverse(gimbal.alpha, gimbal.beta);
    let (gamma_s1_rate, gamma_s2_rate) = spec.inverse(gimbal.alpha_rate, gimbal.beta_rate);
    Ok(ServoAngles {
        gamma_s1,
        gamma_s2,
        gamma_s1_rate,
        gamma_s2_rate,
    })
}

/// Diameters of the big (octagon side) and small (hexadecagon side) gears
/// for a gear set whose tangential polygons enclose a circle of radius `r`.
pub fn bevel_gear_diameters(r: f64) -> Result<(f64, f64)> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("gear radius must be positive, got {r}")));
    }
    Ok((2.0 * r * (PI / 8.0).tan(), 2.0 * r * (PI / 16.0).tan()))
}

pub fn ideal_gear_ratio() -> f64 {
    (PI / 16.0).tan() / (PI / 8.0).tan()
}

/// Largest pitch-circle mismatch, in teeth of the small gear, for a tooth
/// pair to count as meshing at equal tooth size.
pub const MAX_MESH_RESIDUAL_TEETH: f64 = 0.051;

/// Choose coprime tooth counts `(big, small)` approximating `ideal_ratio`.
///
/// Tooth size is shared by both gears, so the big gear takes as many teeth as
/// the budget allows: the largest `big <= max_teeth` that has a coprime
/// `small` within [`MAX_MESH_RESIDUAL_TEETH`] of `ideal_ratio * big` wins.
/// If no count in the budget meshes that closely, the pair with the smallest
/// ratio error is returned, ties going to the smaller big gear.
pub fn select_tooth_counts(ideal_ratio: f64, max_teeth: u32) -> Result<(u32, u32)> {
    if !(ideal_ratio > 0.0 && ideal_ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ideal ratio must lie in (0, 1), got {ideal_ratio}"
        )));
    }
    if max_teeth < 8 {
        return Err(Error::InvalidParameter(format!("max_teeth must be >= 8, got {max_teeth}")));
    }

    let best_small = |big: u32| -> Option<(u32, f64)> {
        let target = ideal_ratio * big as f64;
        let lo = target.floor().max(1.0) as u32;
        [lo, lo + 1]
            .into_iter()
            .filter(|&s| s < big && gcd(big, s) == 1)
            .map(|s| (s, (s as f64 - target).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    };

    for big in (2..=max_teeth).rev() {
        if let Some((small, residual)) = best_small(big) {
            if residual <= MAX_MESH_RESIDUAL_TEETH {
                return Ok((big, small));
            }
        }
    }

    let mut best: Option<(u32, u32, f64)> = None;
    for big in 2..=max_teeth {
        for small in (1..big).filter(|&s| gcd(big, s) == 1) {
            let err = (small as f64 / big as f64 - ideal_ratio).abs();
            if best.is_none_or(|(_, _, e)| err < e) {
                best = Some((big, small, err));
            }
        }
    }
    let (big, small, _) = best.expect("max_teeth >= 8 always has a coprime pair");
    Ok((big, small))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoModel {
    pub max_speed_rad_s: f64,
    pub max_torque_nm: f64,
    pub position_gain_per_s: f64,
    pub deadband_rad: f64,
}

impl Default for ServoModel {
    fn default() -> Self {
        Self {
            max_speed_rad_s: 6.0,
            max_torque_nm: 2.0,
            position_gain_per_s: 40.0,
            deadband_rad: 1e-4,
        }
    }
}

impl ServoModel {
    pub fn validate(&self) -> Result<()> {
        let ok = [
            self.max_speed_rad_s,
            self.max_torque_nm,
            self.position_gain_per_s,
            self.deadband_rad,
        ]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("servo model values must be positive: {self:?}")))
        }
    }
}

/// One tick of a position servo: first-order lag toward `target`, limited to
/// `max_speed` and idle inside the deadband.
///
/// The torque demand is proportional to the commanded rate and reaches
/// `max_torque` exactly when the rate saturates.
pub fn servo_step(model: &ServoModel, current: f64, target: f64, dt: f64) -> (f64, f64) {
    let error = target - current;
    if error.abs() <= model.deadband_rad || dt <= 0.0 {
        return (current, 0.0);
    }
    let lag = error * (1.0 - (-model.position_gain_per_s * dt).exp());
    let max_step = model.max_speed_rad_s * dt;
    let step = lag.clamp(-max_step, max_step);
    let demand = (model.position_gain_per_s * error / model.max_speed_rad_s).clamp(-1.0, 1.0);
    (current + step, demand * model.max_torque_nm)
}

/// Position step toward a target moving at `target_rate`: the rate is fed
/// forward and the lag only acts on the remaining error. The same speed
/// limit applies. With `target_rate = 0` this is [`servo_step`].
pub fn servo_track(model: &ServoModel, current: f64, target: f64, target_rate: f64, dt: f64) -> (f64, f64) {
    if dt <= 0.0 {
        return (current, 0.0);
    }
    let error = target - current;
    let correction = if error.abs() <= model.deadband_rad {
        0.0
    } else {
        error * (1.0 - (-model.position_gain_per_s * dt).exp())
    };
    let max_step = model.max_speed_rad_s * dt;
    let step = (target_rate * dt + correction).clamp(-max_step, max_step);
    let demand = ((target_rate + model.position_gain_per_s * error) / model.max_speed_rad_s).clamp(-1.0, 1.0);
    (current + step, demand * model.max_torque_nm)
}

/// 3000 rpm.
pub const ROTOR_SETPOINT_RAD_S: f64 = 3000.0 * 2.0 * PI / 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorDrive {
    pub target_speed_rad_s: f64,
    pub speed_gain_nms_per_rad: f64,
    pub max_torque_nm: f64,
}

impl Default for RotorDrive {
    fn default() -> Self {
        Self {
            target_speed_rad_s: ROTOR_SETPOINT_RAD_S,
            speed_gain_nms_per_rad: 0.5,
            max_torque_nm: 1.0,
        }
    }
}

impl RotorDrive {
    pub fn validate(&self) -> Result<()> {
        if self.target_speed_rad_s >= 0.0 && self.speed_gain_nms_per_rad > 0.0 && self.max_torque_nm > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid rotor drive: {self:?}")))
        }
    }
}

/// Proportional speed loop on the rotor, torque about the rotor axis.
/// `feedforward_nm` is added before clamping, typically the drag at the
/// target speed.
pub fn rotor_speed_control(drive: &RotorDrive, current_speed: f64, feedforward_nm: f64) -> f64 {
    (feedforward_nm + drive.speed_gain_nms_per_rad * (drive.target_speed_rad_s - current_speed))
        .clamp(-drive.max_torque_nm, drive.max_torque_nm)
}
