//! Rotations, frame bookkeeping, inertia algebra and the fixed-step
//! integrators used by the rest of the crate.
//!
//! Conventions: quaternions are scalar-first `(w, x, y, z)`, right-handed,
//! and map body coordinates to world coordinates (`v_world = q * v_body`).
//! Angular velocities handed to [`quat_integrate`] are expressed in the body
//! frame, so the update is a right multiplication by the exponential map.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Norm deviation beyond which a quaternion is renormalized.
pub const RENORM_THRESHOLD: f64 = 1e-9;

/// The reference frames of the robot's kinematic chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameTag {
    World,
    Shell,
    OuterGimbal,
    InnerGimbal,
    Rotor,
}

/// A vector tagged with the frame its coordinates are expressed in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramedVec {
    pub frame: FrameTag,
    pub v: Vec3,
}

impl FramedVec {
    pub fn new(frame: FrameTag, v: Vec3) -> Self {
        Self { frame, v }
    }
}

/// Rotation taking coordinates in `from` to coordinates in `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTransform {
    pub from: FrameTag,
    pub to: FrameTag,
    pub rotation: Quat,
}

impl FrameTransform {
    pub fn new(from: FrameTag, to: FrameTag, rotation: Quat) -> Self {
        Self { from, to, rotation }
    }

    pub fn identity(frame: FrameTag) -> Self {
        Self::new(frame, frame, Quat::identity())
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.to, self.from, self.rotation.inverse())
    }

    /// Chain `self: a -> b` with `next: b -> c` into `a -> c`.
    pub fn then(&self, next: &FrameTransform) -> Result<FrameTransform> {
        if next.from != self.to {
            return Err(Error::FrameMismatch {
                expected: self.to,
                found: next.from,
            });
        }
        Ok(FrameTransform::new(
            self.from,
            next.to,
            renormalize(next.rotation * self.rotation),
        ))
    }

    pub fn apply(&self, v: &FramedVec) -> Result<FramedVec> {
        if v.frame != self.from {
            return Err(Error::FrameMismatch {
                expected: self.from,
                found: v.frame,
            });
        }
        Ok(FramedVec::new(self.to, self.rotation * v.v))
    }
}

pub fn rotate(q: &Quat, v: &Vec3) -> Vec3 {
    q * v
}

/// Rebuild the unit quaternion if its norm drifted past [`RENORM_THRESHOLD`].
pub fn renormalize(q: Quat) -> Quat {
    let n = q.as_ref().norm();
    if (n - 1.0).abs() > RENORM_THRESHOLD {
        UnitQuaternion::new_normalize(*q.as_ref())
    } else {
        q
    }
}

/// Build a unit quaternion from raw scalar-first components, normalizing.
pub fn quat_from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Quat> {
    ensure_finite("quaternion", &[w, x, y, z])?;
    let raw = Quaternion::new(w, x, y, z);
    if raw.norm() < 1e-12 {
        return Err(Error::InvalidParameter("zero quaternion".into()));
    }
    Ok(UnitQuaternion::new_normalize(raw))
}

pub fn quat_to_wxyz(q: &Quat) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

/// Advance `q` by the body-frame angular velocity `omega_body` held over `dt`.
pub fn quat_integrate(q: &Quat, omega_body: &Vec3, dt: f64) -> Result<Quat> {
    ensure_finite("angular velocity", omega_body.as_slice())?;
    ensure_finite("quaternion", q.as_ref().coords.as_slice())?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let delta = UnitQuaternion::from_scaled_axis(omega_body * dt);
    Ok(UnitQuaternion::new_normalize(*(q * delta).as_ref()))
}

/// Time derivative of a quaternion under body-frame angular velocity.
pub fn quat_derivative(q: &Quaternion<f64>, omega_body: &Vec3) -> Quaternion<f64> {
    q * Quaternion::from_imag(*omega_body) * 0.5
}

/// One classical fourth-order Runge-Kutta step.
///
/// `deriv(t, y, dydt)` fills `dydt`. Any NaN in a stage derivative aborts the
/// step and reports the first offending component.
pub fn rk4_step<F>(state: &[f64], mut deriv: F, t: f64, dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = state.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    let mut eval = |time: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        deriv(time, y, out)?;
        if let Some(index) = out.iter().position(|v| v.is_nan()) {
            return Err(Error::NanDerivative { index, time });
        }
        Ok(())
    };

    eval(t, state, &mut k1)?;
    for i in 0..n {
        tmp[i] = state[i] + 0.5 * dt * k1[i];
    }
    eval(t + 0.5 * dt, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = state[i] + 0.5 * dt * k2[i];
    }
    eval(t + 0.5 * dt, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = state[i] + dt * k3[i];
    }
    eval(t + dt, &tmp, &mut k4)?;

    Ok((0..n)
        .map(|i| state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn symmetric_tol(m: &Mat3) -> f64 {
    1e-12 * m.abs().max().max(1e-300)
}

/// Symmetric with non-negative eigenvalues (point masses have zero inertia).
pub fn check_psd(m: &Mat3, label: &str) -> Result<()> {
    ensure_finite(label, m.as_slice())?;
    if (m - m.transpose()).abs().max() > symmetric_tol(m) {
        return Err(Error::NotSpd(format!("{label} is not symmetric: {m}")));
    }
    let eig = m.symmetric_eigenvalues();
    let floor = -1e-12 * eig.abs().max();
    if eig.iter().any(|&e| e < floor) {
        return Err(Error::NotSpd(format!("{label} has eigenvalues {eig:?}")));
    }
    Ok(())
}

pub fn check_spd(m: &Mat3, label: &str) -> Result<()> {
    check_psd(m, label)?;
    if m.cholesky().is_none() {
        return Err(Error::NotSpd(format!("{label} is singular: {m}")));
    }
    Ok(())
}

/// Principal moments of a rigid body must satisfy `I1 + I2 >= I3` for every
/// permutation.
pub fn check_triangle(m: &Mat3, label: &str) -> Result<()> {
    let e = m.symmetric_eigenvalues();
    let tol = 1e-9 * e.abs().max();
    for i in 0..3 {
        let (a, b, c) = (e[i], e[(i + 1) % 3], e[(i + 2) % 3]);
        if a + b < c - tol {
            return Err(Error::InvalidParameter(format!(
                "{label} violates the triangle inequality: {e:?}"
            )));
        }
    }
    Ok(())
}

/// Inertia about an axis set displaced by `offset` from the center of mass.
pub fn parallel_axis(inertia_com: &Mat3, mass: f64, offset: &Vec3) -> Result<Mat3> {
    check_psd(inertia_com, "inertia_com")?;
    ensure_finite("offset", offset.as_slice())?;
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
    }
    let shift = mass * (Mat3::identity() * offset.norm_squared() - offset * offset.transpose());
    Ok(inertia_com + shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn zero_rate_keeps_identity() {
        let q = quat_integrate(&Quat::identity(), &Vec3::zeros(), 0.01).unwrap();
        assert_eq!(q, Quat::identity());
    }

    #[test]
    fn half_turn_about_z() {
        let q = quat_integrate(&Quat::identity(), &Vec3::new(0.0, 0.0, PI), 1.0).unwrap();
        let [w, x, y, z] = quat_to_wxyz(&q);
        let s = z.signum();
        assert!((w * s).abs() < 1e-12 && (x * s).abs() < 1e-12 && (y * s).abs() < 1e-12);
        assert_relative_eq!(z.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_finite_rate() {
        let err = quat_integrate(&Quat::identity(), &Vec3::new(f64::NAN, 0.0, 0.0), 0.1);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert!(quat_integrate(&Quat::identity(), &Vec3::zeros(), 0.0).is_err());
    }

    #[test]
    fn composed_steps_match_axis_angle() {
        let omega = Vec3::new(1.0, 2.0, 3.0);
        let mut q = Quat::identity();
        for _ in 0..1000 {
            q = quat_integrate(&q, &omega, 1e-3).unwrap();
        }
        // closed-form axis-angle rotation of |omega| rad about omega/|omega|
        let axis = nalgebra::Unit::new_normalize(omega);
        let oracle = UnitQuaternion::from_axis_angle(&axis, omega.norm());
        assert!(q.angle_to(&oracle) < 1e-4);
    }

    #[test]
    fn double_cover_gives_same_matrix() {
        let q = quat_from_wxyz(0.3, -0.2, 0.5, 0.7).unwrap();
        let neg = quat_from_wxyz(-0.3, 0.2, -0.5, -0.7).unwrap();
        assert_relative_eq!(q.to_rotation_matrix().matrix(), neg.to_rotation_matrix().matrix(), epsilon = 1e-15);
    }

    #[test]
    fn rk4_decay() {
        let y = rk4_step(&[1.0], |_, y, d| { d[0] = -y[0]; Ok(()) }, 0.0, 0.1).unwrap();
        assert!((y[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn rk4_zero_derivative_is_bit_exact() {
        let s = [0.1, -3.7, 1e300, 5e-320];
        let y = rk4_step(&s, |_, _, d| { d.fill(0.0); Ok(()) }, 0.0, 0.3).unwrap();
        assert_eq!(y.as_slice(), &s);
    }

    #[test]
    fn rk4_reports_nan_component() {
        let err = rk4_step(&[1.0, 2.0], |_, _, d| { d[0] = 0.0; d[1] = f64::NAN; Ok(()) }, 0.0, 0.1);
        assert!(matches!(err, Err(Error::NanDerivative { index: 1, .. })));
    }

    #[test]
    fn rk4_oscillator_energy() {
        // x'' = -x, closed form x = cos t, energy 1/2
        let mut y = vec![1.0, 0.0];
        let dt = 1e-3;
        for k in 0..10_000 {
            y = rk4_step(&y, |_, s, d| { d[0] = s[1]; d[1] = -s[0]; Ok(()) }, k as f64 * dt, dt).unwrap();
        }
        let energy = 0.5 * (y[0] * y[0] + y[1] * y[1]);
        assert!((energy - 0.5).abs() / 0.5 < 1e-8);
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
    }

    fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
        num / den
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let lambda = -2.0;
        let dts = [0.2, 0.1, 0.05, 0.025];
        let errs: Vec<f64> = dts
            .iter()
            .map(|&dt| {
                let y = rk4_step(&[1.0], |_, y, d| { d[0] = lambda * y[0]; Ok(()) }, 0.0, dt).unwrap();
                (y[0] - (lambda * dt).exp()).abs()
            })
            .collect();
        // local error is O(dt^5), which bounds the requested order from above
        assert!(loglog_slope(&dts, &errs) >= 3.8);
    }

    #[test]
    fn quat_substeps_converge() {
        // Euler-style composition of a time-varying rate against a fine reference.
        let rate = |t: f64| Vec3::new(1.0 + t, 2.0 * (3.0 * t).cos(), -1.5 * t);
        let integrate = |n: usize| {
            let dt = 1.0 / n as f64;
            let mut q = Quat::identity();
            for k in 0..n {
                q = quat_integrate(&q, &rate(k as f64 * dt + 0.5 * dt), dt).unwrap();
            }
            q
        };
        let reference = integrate(1 << 16);
        let ns = [16usize, 32, 64, 128];
        let dts: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
        let errs: Vec<f64> = ns.iter().map(|&n| integrate(n).angle_to(&reference)).collect();
        assert!(loglog_slope(&dts, &errs) >= 1.9, "errs {errs:?}");
    }

    #[test]
    fn parallel_axis_cases() {
        let i = Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 2.5));
        assert_eq!(parallel_axis(&i, 3.0, &Vec3::zeros()).unwrap(), i);

        let p = parallel_axis(&Mat3::zeros(), 2.0, &Vec3::new(0.5, 0.0, 0.0)).unwrap();
        assert_relative_eq!(p, Mat3::from_diagonal(&Vec3::new(0.0, 0.5, 0.5)), epsilon = 1e-15);

        let sphere = Mat3::identity() * 0.4;
        let t = parallel_axis(&sphere, 1.0, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(t[(0, 0)], 1.4, epsilon = 1e-12);
        assert_relative_eq!(t[(1, 1)], 1.4, epsilon = 1e-12);
        assert_relative_eq!(t[(2, 2)], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn parallel_axis_rejects_bad_input() {
        let bad = Mat3::new(1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(parallel_axis(&bad, 1.0, &Vec3::zeros()), Err(Error::NotSpd(_))));
        let neg = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, 1.0));
        assert!(parallel_axis(&neg, 1.0, &Vec3::zeros()).is_err());
        assert!(parallel_axis(&Mat3::identity(), 0.0, &Vec3::zeros()).is_err());
    }

    #[test]
    fn frame_chain_checks_tags() {
        let a = FrameTransform::new(FrameTag::Shell, FrameTag::World, Quat::identity());
        let b = FrameTransform::new(FrameTag::OuterGimbal, FrameTag::Shell, Quat::identity());
        assert!(matches!(a.then(&b), Err(Error::FrameMismatch { .. })));
        let ba = b.then(&a).unwrap();
        assert_eq!((ba.from, ba.to), (FrameTag::OuterGimbal, FrameTag::World));
        let v = FramedVec::new(FrameTag::Shell, Vec3::x());
        assert!(b.apply(&v).is_err());
        assert_eq!(a.apply(&v).unwrap().frame, FrameTag::World);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn quat() -> impl Strategy<Value = Quat> {
            (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
                .prop_filter("non-zero", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
                .prop_map(|(w, x, y, z)| quat_from_wxyz(w, x, y, z).unwrap())
        }

        proptest! {
            #[test]
            fn rotation_preserves_length(q in quat(), x in -1e3..1e3f64, y in -1e3..1e3f64, z in -1e3..1e3f64) {
                let v = Vec3::new(x, y, z);
                let r = rotate(&q, &v);
                prop_assert!((r.norm() - v.norm()).abs() <= 1e-12 * v.norm().max(1e-300));
            }

            #[test]
            fn integrated_quaternion_stays_unit(q in quat(), wx in -50.0..50.0f64, wy in -50.0..50.0f64, dt in 1e-5..0.1f64) {
                let out = quat_integrate(&q, &Vec3::new(wx, wy, 1.0), dt).unwrap();
                prop_assert!((out.as_ref().norm() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn parallel_axis_never_lowers_eigenvalues(
                d in (0.1..2.0f64, 0.1..2.0f64, 0.1..2.0f64),
                m in 0.01..10.0f64,
                off in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
                q in quat(),
            ) {
                let r = q.to_rotation_matrix();
                let base = r.matrix() * Mat3::from_diagonal(&Vec3::new(d.0, d.1, d.2)) * r.matrix().transpose();
                let base = 0.5 * (base + base.transpose());
                let shifted = parallel_axis(&base, m, &Vec3::new(off.0, off.1, off.2)).unwrap();
                let mut e0: Vec<f64> = base.symmetric_eigenvalues().iter().copied().collect();
                let mut e1: Vec<f64> = shifted.symmetric_eigenvalues().iter().copied().collect();
                e0.sort_by(f64::total_cmp);
                e1.sort_by(f64::total_cmp);
                for (a, b) in e0.iter().zip(&e1) {
                    prop_assert!(*b >= *a - 1e-12);
                }
            }
        }
    }
}
