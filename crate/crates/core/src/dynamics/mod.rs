//! Equations of motion for the shell, the two gimbal rings and the rotor.
//!
//! Generalized speeds are the shell-center velocity (world), the shell
//! angular velocity (shell frame) and the three joint rates. The equations
//! are assembled in Kane's form from per-body Jacobians:
//!
//! ```text
//! M(q) u' = Q + sum_i J_lin_i^T (m_i g - m_i b_i) + J_ang_i^T (-I_i k_i - w_i x I_i w_i)
//! ```
//!
//! where `b_i`, `k_i` are the velocity-product accelerations of body `i`.
//! Internal joint torques enter only their own generalized coordinate, so
//! they cancel in the total angular momentum by construction.

pub mod kinematics;
pub mod params;
pub mod state;

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::rotation::{rk4_step, renormalize, quat_derivative, Vec3};

pub use kinematics::BodyKinematics;
pub use params::{ellipsoid_inertia, BodyParams, RobotParams, PRESET_NAMES};
pub use state::{RobotState, StateRecord, NV, NX};

pub type MassMatrix = SMatrix<f64, NV, NV>;
pub type GenVec = SVector<f64, NV>;

/// Force through the shell center and torque about it, both in world
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

/// Anything that can supply an external wrench on the shell as a function
/// of state. Evaluated at every integrator stage.
pub trait WrenchSource {
    fn wrench(&self, params: &RobotParams, state: &RobotState) -> Wrench;
}

impl WrenchSource for Wrench {
    fn wrench(&self, _: &RobotParams, _: &RobotState) -> Wrench {
        *self
    }
}

impl<F: Fn(&RobotParams, &RobotState) -> Wrench> WrenchSource for F {
    fn wrench(&self, params: &RobotParams, state: &RobotState) -> Wrench {
        self(params, state)
    }
}

/// How the gimbal joints are driven during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GimbalDrive {
    /// Torques on the outer and inner gimbal axes.
    Torque { alpha_nm: f64, beta_nm: f64 },
    /// Joint rates enforced as constraints for the whole step.
    Rates { alpha_rad_s: f64, beta_rad_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuationInput {
    pub gimbal: GimbalDrive,
    pub rotor_torque_nm: f64,
}

impl ActuationInput {
    pub fn passive() -> Self {
        Self {
            gimbal: GimbalDrive::Torque {
                alpha_nm: 0.0,
                beta_nm: 0.0,
            },
            rotor_torque_nm: 0.0,
        }
    }

    pub fn rates(alpha_rad_s: f64, beta_rad_s: f64, rotor_torque_nm: f64) -> Self {
        Self {
            gimbal: GimbalDrive::Rates { alpha_rad_s, beta_rad_s },
            rotor_torque_nm,
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = match self.gimbal {
            GimbalDrive::Torque { alpha_nm, beta_nm } => (alpha_nm, beta_nm),
            GimbalDrive::Rates { alpha_rad_s, beta_rad_s } => (alpha_rad_s, beta_rad_s),
        };
        crate::error::ensure_finite("actuation", &[a, b, self.rotor_torque_nm])
    }
}

/// Generalized accelerations plus the total torque acting on each joint
/// (actuation, losses and, in rate mode, the constraint torque).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accelerations {
    pub udot: GenVec,
    pub joint_torques: [f64; 3],
    /// Joint torques delivered by the actuators only (no losses).
    pub actuator_torques: [f64; 3],
}

pub fn assemble_mass_matrix(params: &RobotParams, state: &RobotState) -> Result<MassMatrix> {
    let kin = kinematics::compute(params, state);
    let m = mass_matrix_from(params, &kin);
    if m.cholesky().is_none() {
        return Err(Error::NotSpd(format!(
            "generalized mass matrix for parameter set `{}`",
            params.name
        )));
    }
    Ok(m)
}

fn mass_matrix_from(params: &RobotParams, kin: &[BodyKinematics; 4]) -> MassMatrix {
    let mut m = MassMatrix::zeros();
    for (body, k) in params.bodies().iter().zip(kin) {
        m += k.j_lin.transpose() * k.j_lin * body.mass_kg;
        m += k.j_ang.transpose() * body.inertia() * k.j_ang;
    }
    for i in 6..NV {
        m[(i, i)] += params.joint_regularization_kg_m2;
    }
    0.5 * (m + m.transpose())
}

pub fn kinetic_energy(params: &RobotParams, state: &RobotState) -> f64 {
    let kin = kinematics::compute(params, state);
    params
        .bodies()
        .iter()
        .zip(&kin)
        .map(|(b, k)| 0.5 * b.mass_kg * k.com_velocity.norm_squared() + 0.5 * k.omega.dot(&(b.inertia() * k.omega)))
        .sum()
}

pub fn potential_energy(params: &RobotParams, state: &RobotState) -> f64 {
    let g = params.gravity();
    let kin = kinematics::compute(params, state);
    params
        .bodies()
        .iter()
        .zip(&kin)
        .map(|(b, k)| -b.mass_kg * g.dot(&k.com_world))
        .sum()
}

pub fn total_linear_momentum(params: &RobotParams, state: &RobotState) -> Vec3 {
    let kin = kinematics::compute(params, state);
    params
        .bodies()
        .iter()
        .zip(&kin)
        .map(|(b, k)| k.com_velocity * b.mass_kg)
        .sum()
}

pub fn center_of_mass(params: &RobotParams, state: &RobotState) -> Vec3 {
    let kin = kinematics::compute(params, state);
    params
        .bodies()
        .iter()
        .zip(&kin)
        .map(|(b, k)| k.com_world * b.mass_kg)
        .sum::<Vec3>()
        / params.total_mass()
}

/// Total angular momentum about the world point `about`.
pub fn total_angular_momentum(params: &RobotParams, state: &RobotState, about: &Vec3) -> Vec3 {
    let kin = kinematics::compute(params, state);
    params
        .bodies()
        .iter()
        .zip(&kin)
        .map(|(b, k)| {
            (k.com_world - about).cross(&(k.com_velocity * b.mass_kg)) + k.rot_world * (b.inertia() * k.omega)
        })
        .sum()
}

/// Angular momentum of the rotor about its own center, world coordinates.
pub fn rotor_momentum(params: &RobotParams, state: &RobotState) -> Vec3 {
    let kin = kinematics::compute(params, state);
    kin[3].rot_world * (params.rotor.inertia() * kin[3].omega)
}

/// Gyroscopic coupling torque `gimbal_rate x rotor_momentum`: the torque
/// that turns the rotor's momentum at the gimbal rate. The structure
/// carrying the gimbal receives its negative.
pub fn gyroscopic_reaction(rotor_momentum: &Vec3, gimbal_rate: &Vec3) -> Vec3 {
    gimbal_rate.cross(rotor_momentum)
}

/// Solve the equations of motion at `state`.
pub fn accelerations(
    params: &RobotParams,
    state: &RobotState,
    input: &ActuationInput,
    wrench: &Wrench,
) -> Result<Accelerations> {
    let kin = kinematics::compute(params, state);
    let mass = mass_matrix_from(params, &kin);
    let g = params.gravity();

    let mut rhs = GenVec::zeros();
    for (body, k) in params.bodies().iter().zip(&kin) {
        let inertia = body.inertia();
        rhs += k.j_lin.transpose() * ((g - k.bias_lin) * body.mass_kg);
        rhs -= k.j_ang.transpose() * (inertia * k.bias_ang + k.omega.cross(&(inertia * k.omega)));
    }
    let rot = state.orientation.to_rotation_matrix().into_inner();
    let torque_body = rot.transpose() * wrench.torque;
    for i in 0..3 {
        rhs[i] += wrench.force[i];
        rhs[3 + i] += torque_body[i];
    }

    let losses = [
        -params.joint_damping_nms_per_rad * state.gimbal.alpha_rate,
        -params.joint_damping_nms_per_rad * state.gimbal.beta_rate,
        -params.rotor_drag_nms_per_rad * state.rotor_speed,
    ];
    let mut actuator = [0.0, 0.0, input.rotor_torque_nm];
    rhs[8] += input.rotor_torque_nm + losses[2];

    let udot = match input.gimbal {
        GimbalDrive::Torque { alpha_nm, beta_nm } => {
            actuator[0] = alpha_nm;
            actuator[1] = beta_nm;
            rhs[6] += alpha_nm + losses[0];
            rhs[7] += beta_nm + losses[1];
            let chol = mass.cholesky().ok_or_else(|| {
                Error::NotSpd(format!("generalized mass matrix for `{}`", params.name))
            })?;
            chol.solve(&rhs)
        }
        GimbalDrive::Rates { .. } => {
            // alpha and beta accelerations are zero; solve for the other seven.
            let mut reduced = SMatrix::<f64, 7, 7>::zeros();
            let mut reduced_rhs = SVector::<f64, 7>::zeros();
            for (r, &i) in FREE.iter().enumerate() {
                reduced_rhs[r] = rhs[i];
                for (c, &j) in FREE.iter().enumerate() {
                    reduced[(r, c)] = mass[(i, j)];
                }
            }
            let chol = reduced.cholesky().ok_or_else(|| {
                Error::NotSpd(format!("reduced mass matrix for `{}`", params.name))
            })?;
            let sol = chol.solve(&reduced_rhs);
            let mut udot = GenVec::zeros();
            for (r, &i) in FREE.iter().enumerate() {
                udot[i] = sol[r];
            }
            // torque the constraint must supply on each gimbal joint
            let residual = mass * udot - rhs;
            actuator[0] = residual[6] - losses[0];
            actuator[1] = residual[7] - losses[1];
            udot
        }
    };

    Ok(Accelerations {
        udot,
        joint_torques: [actuator[0] + losses[0], actuator[1] + losses[1], actuator[2] + losses[2]],
        actuator_torques: actuator,
    })
}

/// Power flowing into the system at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerFlows {
    /// Delivered by the gimbal and rotor actuators.
    pub actuator_w: f64,
    /// Removed by joint damping and rotor drag (non-negative).
    pub loss_w: f64,
    /// Delivered by the external wrench.
    pub external_w: f64,
}

fn power_flows(params: &RobotParams, state: &RobotState, acc: &Accelerations, wrench: &Wrench) -> PowerFlows {
    let rates = [state.gimbal.alpha_rate, state.gimbal.beta_rate, state.rotor_speed];
    let actuator_w = (0..3).map(|i| acc.actuator_torques[i] * rates[i]).sum();
    let loss_w = params.joint_damping_nms_per_rad * (rates[0] * rates[0] + rates[1] * rates[1])
        + params.rotor_drag_nms_per_rad * rates[2] * rates[2];
    let external_w = wrench.force.dot(&state.velocity) + wrench.torque.dot(&state.shell_omega_world());
    PowerFlows {
        actuator_w,
        loss_w,
        external_w,
    }
}

/// Time derivative of the flat state vector.
pub fn flat_derivative(
    params: &RobotParams,
    y: &[f64],
    input: &ActuationInput,
    wrench: &dyn WrenchSource,
    dydt: &mut [f64],
) -> Result<()> {
    flat_derivative_with_power(params, y, input, wrench, dydt).map(|_| ())
}

fn flat_derivative_with_power(
    params: &RobotParams,
    y: &[f64],
    input: &ActuationInput,
    wrench: &dyn WrenchSource,
    dydt: &mut [f64],
) -> Result<PowerFlows> {
    let state = RobotState::from_flat(&y[..NX])?;
    let w = wrench.wrench(params, &state);
    let acc = accelerations(params, &state, input, &w)?;
    let q = nalgebra::Quaternion::new(y[3], y[4], y[5], y[6]);
    let qdot = quat_derivative(&q, &state.angular_velocity);
    dydt[0..3].copy_from_slice(&y[7..10]);
    dydt[3] = qdot.w;
    dydt[4] = qdot.i;
    dydt[5] = qdot.j;
    dydt[6] = qdot.k;
    dydt[7..10].copy_from_slice(&acc.udot.as_slice()[0..3]);
    dydt[10..13].copy_from_slice(&acc.udot.as_slice()[3..6]);
    dydt[13..16].copy_from_slice(&y[16..19]);
    dydt[16..19].copy_from_slice(&acc.udot.as_slice()[6..9]);
    Ok(power_flows(params, &state, &acc, &w))
}

const FREE: [usize; 7] = [0, 1, 2, 3, 4, 5, 8];

/// Jump the gimbal rates to new values through an internal impulse on the
/// two gimbal joints.
///
/// The impulse has no component along the free coordinates, so their
/// generalized momenta `(M u)_f` are unchanged; the shell and rotor react
/// to the jump the way they would to a very short servo torque pulse.
pub fn impose_gimbal_rates(params: &RobotParams, state: &RobotState, alpha_rate: f64, beta_rate: f64) -> Result<RobotState> {
    let mass = assemble_mass_matrix(params, state)?;
    let u = GenVec::from_column_slice(&state.speeds());
    let momentum = mass * u;
    let mut new_u = u;
    new_u[6] = alpha_rate;
    new_u[7] = beta_rate;
    let mut reduced = SMatrix::<f64, 7, 7>::zeros();
    let mut rhs = SVector::<f64, 7>::zeros();
    for (r, &i) in FREE.iter().enumerate() {
        rhs[r] = momentum[i] - mass[(i, 6)] * alpha_rate - mass[(i, 7)] * beta_rate;
        for (c, &j) in FREE.iter().enumerate() {
            reduced[(r, c)] = mass[(i, j)];
        }
    }
    let chol = reduced
        .cholesky()
        .ok_or_else(|| Error::NotSpd(format!("reduced mass matrix for `{}`", params.name)))?;
    let sol = chol.solve(&rhs);
    for (r, &i) in FREE.iter().enumerate() {
        new_u[i] = sol[r];
    }
    let mut next = state.clone();
    next.set_speeds(new_u.as_slice());
    Ok(next)
}

/// Result of one step with the work done over it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub state: RobotState,
    /// Actuator work, including the impulse that set the gimbal rates.
    pub actuator_work_j: f64,
    /// Energy removed by joint damping and rotor drag.
    pub loss_work_j: f64,
    /// Work of the external wrench.
    pub external_work_j: f64,
}

/// Advance the full coupled system by one RK4 step of length `dt`.
///
/// In rate mode the commanded gimbal rates are imposed before integrating
/// (see [`impose_gimbal_rates`]) and held for the whole step.
pub fn dynamics_step(
    params: &RobotParams,
    state: &RobotState,
    input: &ActuationInput,
    wrench: &dyn WrenchSource,
    dt: f64,
) -> Result<RobotState> {
    dynamics_step_report(params, state, input, wrench, dt).map(|r| r.state)
}

pub fn dynamics_step_report(
    params: &RobotParams,
    state: &RobotState,
    input: &ActuationInput,
    wrench: &dyn WrenchSource,
    dt: f64,
) -> Result<StepReport> {
    if !(dt > 0.0 && dt <= 1e-2) {
        return Err(Error::InvalidParameter(format!("dt must lie in (0, 0.01], got {dt}")));
    }
    input.validate()?;
    let unstable = |reason: String| Error::Unstable {
        time: 0.0,
        reason,
        state: state.dump(),
    };
    let mut start = state.clone();
    let mut impulse_work = 0.0;
    if let GimbalDrive::Rates { alpha_rad_s, beta_rad_s } = input.gimbal {
        if alpha_rad_s != state.gimbal.alpha_rate || beta_rad_s != state.gimbal.beta_rate {
            start = impose_gimbal_rates(params, state, alpha_rad_s, beta_rad_s).map_err(|e| unstable(e.to_string()))?;
            impulse_work = kinetic_energy(params, &start) - kinetic_energy(params, state);
        }
    }
    let mut y0 = start.to_flat();
    y0.extend_from_slice(&[0.0; 3]);
    let y1 = rk4_step(
        &y0,
        |_, y, d| {
            let p = flat_derivative_with_power(params, y, input, wrench, d)?;
            d[NX] = p.actuator_w;
            d[NX + 1] = p.loss_w;
            d[NX + 2] = p.external_w;
            Ok(())
        },
        0.0,
        dt,
    )
    .map_err(|e| match e {
        Error::NonFinite(reason) | Error::NotSpd(reason) => unstable(reason),
        Error::NanDerivative { index, .. } => unstable(format!("NaN in derivative component {index}")),
        other => other,
    })?;
    let mut next = RobotState::from_flat(&y1[..NX]).map_err(|e| unstable(e.to_string()))?;
    next.orientation = renormalize(next.orientation);
    if let Some(k) = next.speeds().iter().position(|v| v.abs() > params.max_generalized_speed) {
        return Err(unstable(format!(
            "generalized speed {k} = {} exceeds bound {}",
            next.speeds()[k],
            params.max_generalized_speed
        )));
    }
    Ok(StepReport {
        state: next,
        actuator_work_j: y1[NX] + impulse_work,
        loss_work_j: y1[NX + 1],
        external_work_j: y1[NX + 2],
    })
}
