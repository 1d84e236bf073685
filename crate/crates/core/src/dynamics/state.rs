use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Result};
use crate::gear::{wrap_angle, GimbalAngles};
use crate::rotation::{quat_from_wxyz, quat_to_wxyz, Quat, Vec3};

/// Number of generalized speeds: shell linear (3), shell angular (3), alpha,
/// beta, rotor.
pub const NV: usize = 9;
/// Length of the flat integration vector.
pub const NX: usize = 19;

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    /// Shell center in world coordinates.
    pub position: Vec3,
    /// Shell-to-world rotation.
    pub orientation: Quat,
    /// Shell center velocity, world coordinates.
    pub velocity: Vec3,
    /// Shell angular velocity, shell coordinates.
    pub angular_velocity: Vec3,
    pub gimbal: GimbalAngles,
    pub rotor_angle: f64,
    /// Rotor spin rate relative to the inner gimbal.
    pub rotor_speed: f64,
}

impl Default for RobotState {
    fn default() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: Quat::identity(),
            velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            gimbal: GimbalAngles::default(),
            rotor_angle: 0.0,
            rotor_speed: 0.0,
        }
    }
}

impl RobotState {
    /// Generalized speeds `(v, omega, alpha_rate, beta_rate, rotor_speed)`.
    pub fn speeds(&self) -> [f64; NV] {
        [
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
            self.angular_velocity.x,
            self.angular_velocity.y,
            self.angular_velocity.z,
            self.gimbal.alpha_rate,
            self.gimbal.beta_rate,
            self.rotor_speed,
        ]
    }

    pub fn set_speeds(&mut self, u: &[f64]) {
        self.velocity = Vec3::new(u[0], u[1], u[2]);
        self.angular_velocity = Vec3::new(u[3], u[4], u[5]);
        self.gimbal.alpha_rate = u[6];
        self.gimbal.beta_rate = u[7];
        self.rotor_speed = u[8];
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let q = quat_to_wxyz(&self.orientation);
        let mut y = Vec::with_capacity(NX);
        y.extend_from_slice(self.position.as_slice());
        y.extend_from_slice(&q);
        y.extend_from_slice(self.velocity.as_slice());
        y.extend_from_slice(self.angular_velocity.as_slice());
        y.extend_from_slice(&[
            self.gimbal.alpha,
            self.gimbal.beta,
            self.rotor_angle,
            self.gimbal.alpha_rate,
            self.gimbal.beta_rate,
            self.rotor_speed,
        ]);
        y
    }

    /// Inverse of [`to_flat`](Self::to_flat); renormalizes the quaternion
    /// and wraps the joint angles.
    pub fn from_flat(y: &[f64]) -> Result<Self> {
        ensure_finite("state", y)?;
        Ok(Self {
            position: Vec3::new(y[0], y[1], y[2]),
            orientation: quat_from_wxyz(y[3], y[4], y[5], y[6])?,
            velocity: Vec3::new(y[7], y[8], y[9]),
            angular_velocity: Vec3::new(y[10], y[11], y[12]),
            gimbal: GimbalAngles::new(y[13], y[14], y[16], y[17]),
            rotor_angle: wrap_angle(y[15]),
            rotor_speed: y[18],
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// World angular velocity of the shell.
    pub fn shell_omega_world(&self) -> Vec3 {
        self.orientation * self.angular_velocity
    }

    pub fn dump(&self) -> String {
        serde_json::to_string(&StateRecord::from(self)).unwrap_or_else(|_| format!("{self:?}"))
    }
}

/// Serializable form of [`RobotState`] with unit-suffixed keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRecord {
    #[serde(default)]
    pub position_m: [f64; 3],
    #[serde(default = "identity_wxyz")]
    pub orientation_wxyz: [f64; 4],
    #[serde(default)]
    pub velocity_m_s: [f64; 3],
    #[serde(default)]
    pub angular_velocity_body_rad_s: [f64; 3],
    #[serde(default)]
    pub alpha_rad: f64,
    #[serde(default)]
    pub beta_rad: f64,
    #[serde(default)]
    pub alpha_rate_rad_s: f64,
    #[serde(default)]
    pub beta_rate_rad_s: f64,
    #[serde(default)]
    pub rotor_angle_rad: f64,
    #[serde(default)]
    pub rotor_speed_rad_s: f64,
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl Default for StateRecord {
    fn default() -> Self {
        StateRecord::from(&RobotState::default())
    }
}

impl From<&RobotState> for StateRecord {
    fn from(s: &RobotState) -> Self {
        Self {
            position_m: s.position.into(),
            orientation_wxyz: quat_to_wxyz(&s.orientation),
            velocity_m_s: s.velocity.into(),
            angular_velocity_body_rad_s: s.angular_velocity.into(),
            alpha_rad: s.gimbal.alpha,
            beta_rad: s.gimbal.beta,
            alpha_rate_rad_s: s.gimbal.alpha_rate,
            beta_rate_rad_s: s.gimbal.beta_rate,
            rotor_angle_rad: s.rotor_angle,
            rotor_speed_rad_s: s.rotor_speed,
        }
    }
}

impl TryFrom<&StateRecord> for RobotState {
    type Error = crate::error::Error;

    fn try_from(r: &StateRecord) -> Result<Self> {
        let [w, x, y, z] = r.orientation_wxyz;
        let state = RobotState {
            position: r.position_m.into(),
            orientation: quat_from_wxyz(w, x, y, z)?,
            velocity: r.velocity_m_s.into(),
            angular_velocity: r.angular_velocity_body_rad_s.into(),
            gimbal: GimbalAngles::new(r.alpha_rad, r.beta_rad, r.alpha_rate_rad_s, r.beta_rate_rad_s),
            rotor_angle: wrap_angle(r.rotor_angle_rad),
            rotor_speed: r.rotor_speed_rad_s,
        };
        ensure_finite("initial state", &state.to_flat())?;
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let s = RobotState {
            position: Vec3::new(1.0, -2.0, 0.3),
            orientation: quat_from_wxyz(0.9, 0.1, -0.2, 0.3).unwrap(),
            velocity: Vec3::new(0.1, 0.2, 0.3),
            angular_velocity: Vec3::new(-1.0, 2.0, 0.5),
            gimbal: GimbalAngles::new(0.3, -0.4, 0.5, 0.6),
            rotor_angle: 1.0,
            rotor_speed: 314.0,
        };
        let back = RobotState::from_flat(&s.to_flat()).unwrap();
        assert_eq!(back, s);
        assert_eq!(s.to_flat().len(), NX);
        let rec = StateRecord::from(&s);
        assert_eq!(RobotState::try_from(&rec).unwrap(), s);
    }

    #[test]
    fn non_finite_state_rejected() {
        let mut y = RobotState::default().to_flat();
        y[8] = f64::INFINITY;
        assert!(RobotState::from_flat(&y).is_err());
    }
}
