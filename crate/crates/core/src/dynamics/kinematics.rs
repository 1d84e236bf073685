//! Per-body velocity Jacobians and velocity-product (bias) accelerations for
//! the shell -> outer gimbal -> inner gimbal -> rotor chain.

use nalgebra::SMatrix;

use super::params::RobotParams;
use super::state::{RobotState, NV};
use crate::rotation::{skew, FrameTag, FrameTransform, Mat3, Quat, Vec3};

pub type Jacobian = SMatrix<f64, 3, NV>;

pub const BODY_FRAMES: [FrameTag; 4] = [
    FrameTag::Shell,
    FrameTag::OuterGimbal,
    FrameTag::InnerGimbal,
    FrameTag::Rotor,
];

/// Joint axes in the child (and parent) frame: outer about x, inner about y,
/// rotor about z.
pub const JOINT_AXES: [Vec3; 3] = [
    Vec3::new(1.0, 0.0, 0.0),
    Vec3::new(0.0, 1.0, 0.0),
    Vec3::new(0.0, 0.0, 1.0),
];

#[derive(Debug, Clone)]
pub struct BodyKinematics {
    /// Body-to-shell rotation.
    pub rot_shell: Mat3,
    /// Body-to-world rotation.
    pub rot_world: Mat3,
    /// Angular velocity, body coordinates.
    pub omega: Vec3,
    /// `omega = j_ang * u`.
    pub j_ang: Jacobian,
    /// World velocity of the center of mass, `v_com = j_lin * u`.
    pub j_lin: Jacobian,
    /// Angular acceleration at zero `u_dot`, body coordinates.
    pub bias_ang: Vec3,
    /// Center-of-mass acceleration at zero `u_dot`, world coordinates.
    pub bias_lin: Vec3,
    pub com_world: Vec3,
    pub com_velocity: Vec3,
}

fn axis_rotation(axis: usize, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    match axis {
        0 => Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        1 => Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        _ => Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
    }
}

/// Child-to-parent rotations of the three joints.
pub fn joint_rotations(state: &RobotState) -> [Mat3; 3] {
    [
        axis_rotation(0, state.gimbal.alpha),
        axis_rotation(1, state.gimbal.beta),
        axis_rotation(2, state.rotor_angle),
    ]
}

pub fn compute(params: &RobotParams, state: &RobotState) -> [BodyKinematics; 4] {
    let u = state.speeds();
    let u = SMatrix::<f64, NV, 1>::from_column_slice(&u);
    let rot = state.orientation.to_rotation_matrix().into_inner();
    let joints = joint_rotations(state);
    let rates = [state.gimbal.alpha_rate, state.gimbal.beta_rate, state.rotor_speed];

    let mut j_ang = Jacobian::zeros();
    j_ang.fixed_view_mut::<3, 3>(0, 3).copy_from(&Mat3::identity());
    let mut rot_shell = Mat3::identity();
    let mut omega = state.angular_velocity;
    let mut bias_ang = Vec3::zeros();

    let mut j_v = Jacobian::zeros();
    j_v.fixed_view_mut::<3, 3>(0, 0).copy_from(&Mat3::identity());

    let bodies = params.bodies();
    std::array::from_fn(|i| {
        if i > 0 {
            let q = joints[i - 1];
            let qt = q.transpose();
            let axis = JOINT_AXES[i - 1];
            let rel = axis * rates[i - 1];
            rot_shell *= q;
            j_ang = qt * j_ang;
            j_ang.set_column(5 + i, &axis);
            omega = qt * omega + rel;
            bias_ang = qt * bias_ang + omega.cross(&rel);
        }
        let rot_world = rot * rot_shell;
        let offset = bodies[i].com_offset();
        let j_lin = j_v - rot_world * skew(&offset) * j_ang;
        let bias_lin = rot_world * (bias_ang.cross(&offset) + omega.cross(&omega.cross(&offset)));
        let com_world = state.position + rot_world * offset;
        let com_velocity = (j_lin * u).into();
        BodyKinematics {
            rot_shell,
            rot_world,
            omega,
            j_ang,
            j_lin,
            bias_ang,
            bias_lin,
            com_world,
            com_velocity,
        }
    })
}

/// Frame transforms from every body frame to the world, in chain order.
pub fn frame_transforms(state: &RobotState) -> [FrameTransform; 4] {
    let joints = joint_rotations(state);
    let mut acc = FrameTransform::new(FrameTag::Shell, FrameTag::World, state.orientation);
    std::array::from_fn(|i| {
        if i > 0 {
            let q = Quat::from_matrix(&joints[i - 1]);
            let link = FrameTransform::new(BODY_FRAMES[i], BODY_FRAMES[i - 1], q);
            acc = link.then(&acc).expect("chain frames are consecutive");
        }
        acc
    })
}
