//! Robot mass properties and the named parameter presets.
//!
//! Axis geometry is fixed: the outer gimbal turns about the shell's major
//! axis (shell x), the inner gimbal about the outer ring's y axis, and the
//! rotor spins about the inner ring's z axis. All three joint axes pass
//! through the shell's geometric center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gear::{GearTrainSpec, RotorDrive, ServoModel};
use crate::rotation::{check_spd, check_triangle, Mat3, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub mass_kg: f64,
    /// Principal-frame diagonal `(Ixx, Iyy, Izz)` about the center of mass.
    pub inertia_diag_kg_m2: [f64; 3],
    /// Products of inertia `(Ixy, Ixz, Iyz)`.
    #[serde(default)]
    pub inertia_products_kg_m2: [f64; 3],
    /// Center of mass relative to the joint origin, in body coordinates.
    #[serde(default)]
    pub com_offset_m: [f64; 3],
}

impl BodyParams {
    pub fn new(mass_kg: f64, diag: [f64; 3]) -> Self {
        Self {
            mass_kg,
            inertia_diag_kg_m2: diag,
            inertia_products_kg_m2: [0.0; 3],
            com_offset_m: [0.0; 3],
        }
    }

    pub fn from_inertia(mass_kg: f64, inertia: &Mat3) -> Self {
        Self {
            mass_kg,
            inertia_diag_kg_m2: [inertia[(0, 0)], inertia[(1, 1)], inertia[(2, 2)]],
            inertia_products_kg_m2: [inertia[(0, 1)], inertia[(0, 2)], inertia[(1, 2)]],
            com_offset_m: [0.0; 3],
        }
    }

    pub fn inertia(&self) -> Mat3 {
        let [xx, yy, zz] = self.inertia_diag_kg_m2;
        let [xy, xz, yz] = self.inertia_products_kg_m2;
        Mat3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }

    pub fn com_offset(&self) -> Vec3 {
        Vec3::from(self.com_offset_m)
    }

    pub fn validate(&self, label: &str) -> Result<()> {
        if !(self.mass_kg > 0.0) || !self.mass_kg.is_finite() {
            return Err(Error::InvalidParameter(format!("{label}: mass must be positive")));
        }
        let inertia = self.inertia();
        check_spd(&inertia, label)?;
        check_triangle(&inertia, label)
    }
}

/// Inertia of an ellipsoid with semi-axes `a, b, c` along x, y, z.
///
/// `hollow_fraction` blends linearly between a solid ellipsoid (0), with
/// `Ixx = m (b^2 + c^2) / 5`, and a thin homoeoidal shell (1), with
/// `Ixx = m (b^2 + c^2) / 3`.
pub fn ellipsoid_inertia(mass: f64, a: f64, b: f64, c: f64, hollow_fraction: f64) -> Result<Mat3> {
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "semi-axes must be positive, got ({a}, {b}, {c})"
        )));
    }
    if !(0.0..=1.0).contains(&hollow_fraction) {
        return Err(Error::InvalidParameter(format!(
            "hollow fraction must lie in [0, 1], got {hollow_fraction}"
        )));
    }
    let k = 0.2 + hollow_fraction * (1.0 / 3.0 - 0.2);
    Ok(Mat3::from_diagonal(&Vec3::new(
        mass * k * (b * b + c * c),
        mass * k * (a * a + c * c),
        mass * k * (a * a + b * b),
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    pub name: String,
    /// True when the mass properties are estimates rather than measurements.
    pub estimated: bool,
    /// Ellipsoid semi-axes along shell x (major), y, z.
    pub semi_axes_m: [f64; 3],
    pub shell: BodyParams,
    pub outer_gimbal: BodyParams,
    pub inner_gimbal: BodyParams,
    pub rotor: BodyParams,
    pub gravity_m_s2: [f64; 3],
    pub joint_damping_nms_per_rad: f64,
    /// Viscous drag between rotor and inner gimbal.
    pub rotor_drag_nms_per_rad: f64,
    /// Added to the diagonal of the joint block of the mass matrix.
    pub joint_regularization_kg_m2: f64,
    /// Any generalized speed above this aborts the step.
    pub max_generalized_speed: f64,
    pub gear: GearTrainSpec,
    pub servo: ServoModel,
    pub rotor_drive: RotorDrive,
}

pub const PRESET_NAMES: [&str; 3] = ["proto1", "proto2", "sphere"];

impl RobotParams {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "proto1" => Ok(Self::proto1()),
            "proto2" => Ok(Self::proto2()),
            "sphere" => Ok(Self::sphere()),
            other => Err(Error::InvalidParameter(format!(
                "unknown parameter set `{other}`; known sets: {}",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    fn shell_body(mass: f64, axes: [f64; 3], hollow: f64) -> BodyParams {
        let inertia = ellipsoid_inertia(mass, axes[0], axes[1], axes[2], hollow)
            .expect("preset axes are positive");
        BodyParams::from_inertia(mass, &inertia)
    }

    /// The 63 x 40 cm egg. Masses are estimates.
    pub fn proto1() -> Self {
        let axes = [0.315, 0.20, 0.20];
        Self {
            name: "proto1".into(),
            estimated: true,
            semi_axes_m: axes,
            shell: Self::shell_body(3.0, axes, 0.8),
            // ring of radius 0.13 m lying in the shell y-z plane at rest
            outer_gimbal: BodyParams::new(0.5, [0.0085, 0.0043, 0.0043]),
            // ring plus motor plus balancing washers, center of mass on the axis
            inner_gimbal: BodyParams::new(1.2, [0.0070, 0.0080, 0.0060]),
            rotor: BodyParams::new(2.0, [0.0102, 0.0102, 0.0200]),
            gravity_m_s2: [0.0, 0.0, -9.81],
            joint_damping_nms_per_rad: 0.001,
            rotor_drag_nms_per_rad: 4.0e-4,
            joint_regularization_kg_m2: 1e-12,
            max_generalized_speed: 1.0e4,
            gear: GearTrainSpec::default(),
            servo: ServoModel::default(),
            rotor_drive: RotorDrive::default(),
        }
    }

    /// The 44 x 32 cm egg. Masses are estimates.
    pub fn proto2() -> Self {
        let axes = [0.22, 0.16, 0.16];
        Self {
            name: "proto2".into(),
            semi_axes_m: axes,
            shell: Self::shell_body(1.8, axes, 0.8),
            outer_gimbal: BodyParams::new(0.35, [0.0042, 0.0021, 0.0021]),
            inner_gimbal: BodyParams::new(0.8, [0.0034, 0.0038, 0.0028]),
            rotor: BodyParams::new(1.3, [0.0040, 0.0040, 0.0079]),
            rotor_drag_nms_per_rad: 2.5e-4,
            gear: GearTrainSpec {
                r_m: 0.04,
                ..GearTrainSpec::default()
            },
            ..Self::proto1()
        }
    }

    /// The proto1 core in a 0.2 m spherical shell.
    pub fn sphere() -> Self {
        let axes = [0.20, 0.20, 0.20];
        Self {
            name: "sphere".into(),
            semi_axes_m: axes,
            shell: Self::shell_body(3.0, axes, 0.8),
            ..Self::proto1()
        }
    }

    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.gravity_m_s2)
    }

    pub fn bodies(&self) -> [&BodyParams; 4] {
        [&self.shell, &self.outer_gimbal, &self.inner_gimbal, &self.rotor]
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies().iter().map(|b| b.mass_kg).sum()
    }

    pub fn is_spherical(&self) -> bool {
        let [a, b, c] = self.semi_axes_m;
        (a - b).abs() < 1e-9 && (a - c).abs() < 1e-9
    }

    /// Spin-axis moment of the rotor.
    pub fn rotor_spin_inertia(&self) -> f64 {
        self.rotor.inertia()[(2, 2)]
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (label, body) in ["shell", "outer_gimbal", "inner_gimbal", "rotor"]
            .iter()
            .zip(self.bodies())
        {
            if let Err(e) = body.validate(label) {
                problems.push(e.to_string());
            }
        }
        let ri = self.rotor.inertia();
        if (ri[(0, 0)] - ri[(1, 1)]).abs() > 1e-9 || ri[(0, 1)].abs() > 1e-9 || ri[(0, 2)].abs() > 1e-9 || ri[(1, 2)].abs() > 1e-9 {
            problems.push("rotor inertia must be axisymmetric about its z axis".into());
        }
        if self.semi_axes_m.iter().any(|s| !(*s > 0.0)) {
            problems.push(format!("semi-axes must be positive: {:?}", self.semi_axes_m));
        }
        if self.gravity_m_s2.iter().any(|g| !g.is_finite()) {
            problems.push("gravity must be finite".into());
        }
        for (label, v) in [
            ("joint_damping_nms_per_rad", self.joint_damping_nms_per_rad),
            ("rotor_drag_nms_per_rad", self.rotor_drag_nms_per_rad),
            ("joint_regularization_kg_m2", self.joint_regularization_kg_m2),
        ] {
            if !(v >= 0.0) {
                problems.push(format!("{label} must be non-negative"));
            }
        }
        if !(self.max_generalized_speed > 0.0) {
            problems.push("max_generalized_speed must be positive".into());
        }
        for r in [self.gear.validate(), self.servo.validate(), self.rotor_drive.validate()] {
            match r {
                Err(Error::Config(list)) => problems.extend(list),
                Err(e) => problems.push(e.to_string()),
                Ok(()) => {}
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Composite center of mass in shell coordinates at zero gimbal angles.
    pub fn composite_com_at_rest(&self) -> Vec3 {
        let m = self.total_mass();
        self.bodies()
            .iter()
            .map(|b| b.com_offset() * b.mass_kg)
            .sum::<Vec3>()
            / m
    }

    /// A copy with the environment switched off: no gravity and no joint
    /// losses. Used for conservation checks.
    pub fn lossless_free_floating(&self) -> Self {
        Self {
            gravity_m_s2: [0.0; 3],
            joint_damping_nms_per_rad: 0.0,
            rotor_drag_nms_per_rad: 0.0,
            ..self.clone()
        }
    }
}
