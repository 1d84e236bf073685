//! Penalty contact between the ellipsoidal shell and a flat ground plane,
//! with regularized Coulomb friction.

use serde::{Deserialize, Serialize};

use crate::dynamics::{RobotParams, RobotState, Wrench, WrenchSource};
use crate::error::{Error, Result};
use crate::rotation::{Quat, Vec3};

pub const DEFAULT_STIFFNESS: f64 = 5.0e4;
pub const DEFAULT_DAMPING_RATIO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    /// Unit normal pointing out of the ground, world coordinates.
    pub normal: [f64; 3],
    /// Plane offset along the normal: points on the plane satisfy `n . x = height`.
    pub height_m: f64,
    pub stiffness_n_m: f64,
    pub damping_ns_m: f64,
    pub mu_static: f64,
    pub mu_kinetic: f64,
    pub slip_regularization_m_s: f64,
}

impl Default for GroundPlane {
    fn default() -> Self {
        Self::for_robot(&RobotParams::proto1())
    }
}

impl GroundPlane {
    /// Horizontal plane at zero height, damped at [`DEFAULT_DAMPING_RATIO`]
    /// of critical for the given robot's total mass.
    pub fn for_robot(params: &RobotParams) -> Self {
        Self {
            normal: [0.0, 0.0, 1.0],
            height_m: 0.0,
            stiffness_n_m: DEFAULT_STIFFNESS,
            damping_ns_m: critical_damping(DEFAULT_STIFFNESS, params.total_mass(), DEFAULT_DAMPING_RATIO),
            mu_static: 0.8,
            mu_kinetic: 0.6,
            slip_regularization_m_s: 1e-3,
        }
    }

    pub fn normal(&self) -> Vec3 {
        Vec3::from(self.normal)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if (self.normal().norm() - 1.0).abs() > 1e-9 {
            problems.push(format!("ground normal must be unit length, got {:?}", self.normal));
        }
        for (label, v) in [
            ("stiffness_n_m", self.stiffness_n_m),
            ("damping_ns_m", self.damping_ns_m),
            ("mu_static", self.mu_static),
            ("mu_kinetic", self.mu_kinetic),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                problems.push(format!("ground {label} must be non-negative, got {v}"));
            }
        }
        if self.mu_kinetic > self.mu_static {
            problems.push("ground mu_kinetic must not exceed mu_static".into());
        }
        if !(self.slip_regularization_m_s > 0.0) {
            problems.push("ground slip_regularization_m_s must be positive".into());
        }
        if !self.height_m.is_finite() {
            problems.push("ground height must be finite".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Decay rate of tangential slip on the linear part of the friction
    /// ramp, for the robot resting with its full weight on the plane. Uses
    /// the shell alone as the rotating body, which over-estimates it.
    pub fn friction_rate_per_s(&self, params: &RobotParams) -> f64 {
        let m = params.total_mass();
        let weight = m * params.gravity().norm();
        let r = params.semi_axes_m.iter().cloned().fold(0.0, f64::max);
        let i = params.shell.inertia_diag_kg_m2.iter().cloned().fold(f64::INFINITY, f64::min);
        self.mu_static * weight / self.slip_regularization_m_s * (1.0 / m + r * r / i)
    }

    /// Friction coefficient at a given slip speed: linear ramp up to
    /// `mu_static` at the regularization speed, then an exponential decay
    /// toward `mu_kinetic`. Continuous everywhere.
    fn friction_coefficient(&self, slip: f64) -> f64 {
        let v = self.slip_regularization_m_s;
        if slip < v {
            self.mu_static * slip / v
        } else {
            self.mu_kinetic + (self.mu_static - self.mu_kinetic) * (-(slip / v - 1.0)).exp()
        }
    }
}

pub fn critical_damping(stiffness: f64, mass: f64, ratio: f64) -> f64 {
    2.0 * ratio * (stiffness * mass).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactResult {
    pub active: bool,
    pub point: [f64; 3],
    pub penetration_m: f64,
    pub normal_force_n: f64,
    pub friction_force_n: [f64; 3],
    pub slip_speed_m_s: f64,
    /// Slip below the regularization speed.
    pub rolling: bool,
    /// Velocity of the shell's material point at the contact, world frame.
    pub point_velocity_m_s: [f64; 3],
    /// Total ground force (normal plus friction), world frame.
    pub force_n: [f64; 3],
}

impl ContactResult {
    pub fn separated() -> Self {
        Self::default()
    }

    /// Power the ground delivers to the robot.
    pub fn power_w(&self) -> f64 {
        Vec3::from(self.force_n).dot(&Vec3::from(self.point_velocity_m_s))
    }

    /// Energy stored in the penalty spring. The support point is where the
    /// penetration is deepest, so `k * depth * n` applied there is exactly
    /// the gradient of this potential.
    pub fn spring_energy_j(&self, plane: &GroundPlane) -> f64 {
        if self.active {
            0.5 * plane.stiffness_n_m * self.penetration_m * self.penetration_m
        } else {
            0.0
        }
    }
}

/// Point of the ellipsoid farthest along `direction`.
pub fn ellipsoid_support_point(
    semi_axes: [f64; 3],
    orientation: &Quat,
    center: &Vec3,
    direction: &Vec3,
) -> Result<Vec3> {
    if semi_axes.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "semi-axes must be positive, got {semi_axes:?}"
        )));
    }
    let local = orientation.inverse() * direction;
    let scaled = Vec3::new(semi_axes[0] * local.x, semi_axes[1] * local.y, semi_axes[2] * local.z);
    let n = scaled.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::InvalidParameter(format!("degenerate support direction {direction:?}")));
    }
    let p_local = Vec3::new(semi_axes[0] * scaled.x, semi_axes[1] * scaled.y, semi_axes[2] * scaled.z) / n;
    Ok(center + orientation * p_local)
}

/// Ground wrench on the shell (force through, and torque about, the shell
/// center) and the contact diagnostics.
pub fn contact_wrench(plane: &GroundPlane, params: &RobotParams, state: &RobotState) -> (Wrench, ContactResult) {
    let n = plane.normal();
    let Ok(point) = ellipsoid_support_point(params.semi_axes_m, &state.orientation, &state.position, &-n) else {
        return (Wrench::default(), ContactResult::separated());
    };
    let depth = plane.height_m - n.dot(&point);
    if depth <= 0.0 {
        return (Wrench::default(), ContactResult::separated());
    }
    let r = point - state.position;
    let v_point = state.velocity + state.shell_omega_world().cross(&r);
    let depth_rate = -n.dot(&v_point);
    let normal_force = (plane.stiffness_n_m * depth + plane.damping_ns_m * depth_rate).max(0.0);

    let v_tan = v_point - n * n.dot(&v_point);
    let slip = v_tan.norm();
    let friction = if slip > 0.0 {
        -v_tan * (plane.friction_coefficient(slip) * normal_force / slip)
    } else {
        Vec3::zeros()
    };

    let force = n * normal_force + friction;
    let wrench = Wrench {
        force,
        torque: r.cross(&force),
    };
    let result = ContactResult {
        active: true,
        point: point.into(),
        penetration_m: depth,
        normal_force_n: normal_force,
        friction_force_n: friction.into(),
        slip_speed_m_s: slip,
        rolling: slip < plane.slip_regularization_m_s,
        point_velocity_m_s: v_point.into(),
        force_n: force.into(),
    };
    (wrench, result)
}

impl WrenchSource for GroundPlane {
    fn wrench(&self, params: &RobotParams, state: &RobotState) -> Wrench {
        contact_wrench(self, params, state).0
    }
}

/// Speed of the shell's material point at the contact.
pub fn rolling_residual(_params: &RobotParams, state: &RobotState, contact: &ContactResult) -> Result<f64> {
    if !contact.active {
        return Err(Error::NoContact);
    }
    let r = Vec3::from(contact.point) - state.position;
    Ok((state.velocity + state.shell_omega_world().cross(&r)).norm())
}
