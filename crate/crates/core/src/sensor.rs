//! The two IMUs (hull and inner gimbal ring) and a complementary attitude
//! filter.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{kinematics, Accelerations, RobotParams, RobotState};
use crate::error::{Error, Result};
use crate::rotation::{quat_from_wxyz, quat_integrate, FrameTag, Quat, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuMount {
    pub frame: FrameTag,
    /// Sensor origin relative to the shell center, in mount-body coordinates.
    pub position_m: [f64; 3],
    /// Sensor-to-body rotation.
    pub orientation_wxyz: [f64; 4],
    pub gyro_noise_density_rad_s_sqrt_hz: f64,
    pub accel_noise_density_m_s2_sqrt_hz: f64,
    pub sample_rate_hz: f64,
}

/// 0.01 deg/s/sqrt(Hz).
pub const DEFAULT_GYRO_NOISE: f64 = 0.01 * std::f64::consts::PI / 180.0;
/// 100 micro-g/sqrt(Hz).
pub const DEFAULT_ACCEL_NOISE: f64 = 100e-6 * 9.81;

impl ImuMount {
    pub fn hull() -> Self {
        Self {
            frame: FrameTag::Shell,
            position_m: [0.0, 0.0, 0.12],
            orientation_wxyz: [1.0, 0.0, 0.0, 0.0],
            gyro_noise_density_rad_s_sqrt_hz: DEFAULT_GYRO_NOISE,
            accel_noise_density_m_s2_sqrt_hz: DEFAULT_ACCEL_NOISE,
            sample_rate_hz: 100.0,
        }
    }

    pub fn inner_ring() -> Self {
        Self {
            frame: FrameTag::InnerGimbal,
            position_m: [0.0, 0.08, 0.0],
            ..Self::hull()
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.gyro_noise_density_rad_s_sqrt_hz = 0.0;
        self.accel_noise_density_m_s2_sqrt_hz = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !matches!(self.frame, FrameTag::Shell | FrameTag::InnerGimbal) {
            problems.push(format!("IMU frame must be Shell or InnerGimbal, got {:?}", self.frame));
        }
        if !(self.gyro_noise_density_rad_s_sqrt_hz >= 0.0 && self.accel_noise_density_m_s2_sqrt_hz >= 0.0) {
            problems.push("IMU noise densities must be non-negative".into());
        }
        if !(self.sample_rate_hz > 0.0) {
            problems.push("IMU sample rate must be positive".into());
        }
        let [w, x, y, z] = self.orientation_wxyz;
        if let Err(e) = quat_from_wxyz(w, x, y, z) {
            problems.push(format!("IMU orientation: {e}"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    fn sensor_rotation(&self) -> Quat {
        let [w, x, y, z] = self.orientation_wxyz;
        quat_from_wxyz(w, x, y, z).unwrap_or_else(|_| Quat::identity())
    }

    fn body_index(&self) -> usize {
        match self.frame {
            FrameTag::InnerGimbal => 2,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuSample {
    pub gyro_rad_s: [f64; 3],
    pub accel_m_s2: [f64; 3],
}

/// Read one IMU sample.
///
/// `acc` must be the accelerations solved at `state`. Noise is white with
/// per-sample standard deviation `density * sqrt(sample_rate)`.
pub fn imu_read<R: Rng + ?Sized>(
    mount: &ImuMount,
    params: &RobotParams,
    state: &RobotState,
    acc: &Accelerations,
    rng: &mut R,
) -> ImuSample {
    let kin = kinematics::compute(params, state);
    let body = &kin[mount.body_index()];
    let r = Vec3::from(mount.position_m);
    let omega = body.omega;
    let omega_dot = body.j_ang * acc.udot + body.bias_ang;
    let origin_acc = Vec3::new(acc.udot[0], acc.udot[1], acc.udot[2]);
    let point_acc = origin_acc + body.rot_world * (omega_dot.cross(&r) + omega.cross(&omega.cross(&r)));
    let specific_world = point_acc - params.gravity();

    let to_sensor = mount.sensor_rotation().inverse();
    let mut gyro = to_sensor * omega;
    let mut accel = to_sensor * (body.rot_world.transpose() * specific_world);

    let scale = mount.sample_rate_hz.sqrt();
    let sg = mount.gyro_noise_density_rad_s_sqrt_hz * scale;
    let sa = mount.accel_noise_density_m_s2_sqrt_hz * scale;
    if sg > 0.0 {
        gyro += Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)) * sg;
    }
    if sa > 0.0 {
        accel += Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)) * sa;
    }
    ImuSample {
        gyro_rad_s: gyro.into(),
        accel_m_s2: accel.into(),
    }
}

pub const DEFAULT_FILTER_GAIN: f64 = 5.0;

/// Complementary attitude filter: integrates the gyro and pulls the
/// predicted up direction toward the measured specific force.
///
/// Only tilt is corrected; heading has no absolute reference and is carried
/// by gyro integration alone.
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeFilter {
    pub estimate: Quat,
    pub gain_per_s: f64,
    /// When false the accelerometer is ignored (pure gyro integration).
    pub use_accel: bool,
}

impl Default for AttitudeFilter {
    fn default() -> Self {
        Self {
            estimate: Quat::identity(),
            gain_per_s: DEFAULT_FILTER_GAIN,
            use_accel: true,
        }
    }
}

impl AttitudeFilter {
    pub fn update(&mut self, sample: &ImuSample, dt: f64) -> Result<Quat> {
        let mut omega = Vec3::from(sample.gyro_rad_s);
        let accel = Vec3::from(sample.accel_m_s2);
        if self.use_accel && accel.norm() > 1e-6 {
            let up_pred = self.estimate.inverse() * Vec3::z();
            let correction = accel.normalize().cross(&up_pred);
            omega += correction * self.gain_per_s;
        }
        self.estimate = quat_integrate(&self.estimate, &omega, dt)?;
        Ok(self.estimate)
    }
}

/// Angle between the up directions implied by two attitudes; heading
/// differences do not count.
pub fn tilt_error(a: &Quat, b: &Quat) -> f64 {
    let ua = a.inverse() * Vec3::z();
    let ub = b.inverse() * Vec3::z();
    ua.cross(&ub).norm().atan2(ua.dot(&ub))
}

/// Run the default filter from identity over a sample history.
pub fn attitude_from_imu(samples: &[ImuSample], dt: f64) -> Result<Quat> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("attitude estimate needs at least one sample".into()));
    }
    let mut filter = AttitudeFilter::default();
    for s in samples {
        filter.update(s, dt)?;
    }
    Ok(filter.estimate)
}
