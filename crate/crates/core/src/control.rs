//! Operator commands to gimbal rates, the momentum-reservoir gauge, the
//! weight-shifting baseline and recovery maneuvers.
//!
//! Steering works by choosing the torque the shell should feel (about the
//! rolling axis to drive, about the vertical to turn) and precessing the
//! rotor so that its gyroscopic reaction points that way.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::{kinematics, rotor_momentum, RobotParams, RobotState};
use crate::error::{Error, Result};
use crate::gear::{gimbal_to_servo, GearTrainSpec, GimbalAngles, ROTOR_SETPOINT_RAD_S};
use crate::rotation::Vec3;

/// Horizontal shell speed below which the rolling axis falls back to the
/// shell's long axis.
pub const ROLLING_AXIS_MIN_RATE: f64 = 0.05;
pub const WATCHDOG_S: f64 = 0.5;
/// How long the shell must be off the ground before the hold is released.
pub const SUPPORT_LOSS_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DriveCommand {
    pub forward: f64,
    pub turn: f64,
    pub timestamp_s: f64,
}

impl DriveCommand {
    /// Clamps both components to [-1, 1]; non-finite components become 0.
    pub fn new(forward: f64, turn: f64, timestamp_s: f64) -> Self {
        let clamp = |x: f64| if x.is_finite() { x.clamp(-1.0, 1.0) } else { 0.0 };
        Self {
            forward: clamp(forward),
            turn: clamp(turn),
            timestamp_s,
        }
    }

    pub fn clamped(&self) -> Self {
        Self::new(self.forward, self.turn, self.timestamp_s)
    }

    pub fn is_stale(&self, now_s: f64, window_s: f64) -> bool {
        now_s - self.timestamp_s > window_s
    }

    /// The command as seen at `now_s`: zero once older than the window.
    pub fn effective(&self, now_s: f64, window_s: f64) -> Self {
        if self.is_stale(now_s, window_s) {
            Self::new(0.0, 0.0, self.timestamp_s)
        } else {
            self.clamped()
        }
    }

    fn negated(&self) -> Self {
        Self {
            forward: -self.forward,
            turn: -self.turn,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Precession rate of the rotor axis at full command.
    pub max_precession_rate_rad_s: f64,
    pub watchdog_s: f64,
    /// Gimbal pose with a full reservoir.
    pub home_alpha_rad: f64,
    pub home_beta_rad: f64,
    /// Gimbal speed used by recovery maneuvers.
    pub recovery_rate_rad_s: f64,
    /// Proportional gain when steering the gimbal to a target pose.
    pub target_gain_per_s: f64,
    /// Cancel shell rotation in the gimbal rates so the spin axis only moves
    /// when commanded.
    pub inertial_hold: bool,
    /// Share of the servo speed the command may use on top of the hold. The
    /// rest is kept so the hold can absorb disturbances.
    pub drive_budget: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            max_precession_rate_rad_s: 1.0,
            watchdog_s: WATCHDOG_S,
            home_alpha_rad: FRAC_PI_2,
            home_beta_rad: 0.0,
            recovery_rate_rad_s: 0.5,
            target_gain_per_s: 4.0,
            inertial_hold: true,
            drive_budget: 0.6,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("max_precession_rate_rad_s", self.max_precession_rate_rad_s),
            ("watchdog_s", self.watchdog_s),
            ("recovery_rate_rad_s", self.recovery_rate_rad_s),
            ("target_gain_per_s", self.target_gain_per_s),
            ("drive_budget", self.drive_budget),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("controller.{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("home_alpha_rad", self.home_alpha_rad), ("home_beta_rad", self.home_beta_rad)] {
            if !v.is_finite() {
                problems.push(format!("controller.{name} must be finite"));
            }
        }
        if self.drive_budget > 1.0 {
            problems.push(format!("controller.drive_budget must be at most 1, got {}", self.drive_budget));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Unit vector opposite to gravity, or +z with gravity off.
pub fn up_direction(params: &RobotParams) -> Vec3 {
    let g = params.gravity();
    if g.norm() > 1e-12 {
        -g.normalize()
    } else {
        Vec3::z()
    }
}

fn horizontal(v: &Vec3, up: &Vec3) -> Vec3 {
    v - up * v.dot(up)
}

/// Horizontal unit axis the shell is rolling about.
///
/// While the shell turns faster than [`ROLLING_AXIS_MIN_RATE`] this is the
/// horizontal part of its angular velocity; otherwise the horizontal
/// projection of its long axis. The sign always agrees with the long axis,
/// so "forward" does not flip when the robot rolls backwards.
pub fn rolling_axis(params: &RobotParams, state: &RobotState) -> Vec3 {
    let up = up_direction(params);
    let mut long = horizontal(&(state.orientation * Vec3::x()), &up);
    if long.norm() < 1e-6 {
        long = horizontal(&Vec3::x(), &up);
        if long.norm() < 1e-6 {
            long = horizontal(&Vec3::y(), &up);
        }
    }
    let long = long.normalize();
    let spin = horizontal(&state.shell_omega_world(), &up);
    if spin.norm() > ROLLING_AXIS_MIN_RATE {
        let axis = spin.normalize();
        if axis.dot(&long) < 0.0 {
            -axis
        } else {
            axis
        }
    } else {
        long
    }
}

/// Direction the shell travels when rolling positively about `axis`.
pub fn forward_direction(params: &RobotParams, axis: &Vec3) -> Vec3 {
    axis.cross(&up_direction(params))
}

/// Rotor spin axis in world coordinates.
pub fn rotor_axis_world(params: &RobotParams, state: &RobotState) -> Vec3 {
    let kin = kinematics::compute(params, state);
    kin[3].rot_world.column(2).into_owned()
}

/// Gimbal axes (outer, inner) in world coordinates.
pub fn gimbal_axes_world(params: &RobotParams, state: &RobotState) -> (Vec3, Vec3) {
    let kin = kinematics::compute(params, state);
    (kin[1].rot_world.column(0).into_owned(), kin[2].rot_world.column(1).into_owned())
}

/// Gyroscopic torque the rotor puts on the rest of the robot as its spin
/// axis turns in space (shell rotation plus gimbal rates). Only the spin
/// momentum is counted.
pub fn gyro_torque_on_shell(params: &RobotParams, state: &RobotState) -> Vec3 {
    let (outer, inner) = gimbal_axes_world(params, state);
    let precession = state.shell_omega_world() + outer * state.gimbal.alpha_rate + inner * state.gimbal.beta_rate;
    -crate::dynamics::gyroscopic_reaction(&rotor_momentum(params, state), &precession)
}

/// Scale gimbal rates so neither servo exceeds its speed limit.
pub fn clamp_to_servo_limits(
    alpha_rate: f64,
    beta_rate: f64,
    gear: &GearTrainSpec,
    max_servo_speed: f64,
) -> (f64, f64) {
    let g = GimbalAngles {
        alpha_rate,
        beta_rate,
        ..Default::default()
    };
    let Ok(s) = gimbal_to_servo(&g, gear) else {
        return (0.0, 0.0);
    };
    let peak = s.gamma_s1_rate.abs().max(s.gamma_s2_rate.abs());
    if peak > max_servo_speed {
        let k = max_servo_speed / peak;
        (alpha_rate * k, beta_rate * k)
    } else {
        (alpha_rate, beta_rate)
    }
}

/// Add `extra` gimbal rates on top of `base`, scaling `extra` down so the sum
/// keeps every servo under `budget`. If `base` alone needs more than
/// `max_servo_speed` it is clamped and `extra` is dropped.
pub fn add_within_servo_limits(
    base: (f64, f64),
    extra: (f64, f64),
    gear: &GearTrainSpec,
    max_servo_speed: f64,
    budget: f64,
) -> (f64, f64) {
    let servo = |a: f64, b: f64| {
        gimbal_to_servo(
            &GimbalAngles {
                alpha_rate: a,
                beta_rate: b,
                ..Default::default()
            },
            gear,
        )
        .map(|s| [s.gamma_s1_rate, s.gamma_s2_rate])
    };
    let (Ok(h), Ok(c)) = (servo(base.0, base.1), servo(extra.0, extra.1)) else {
        return (0.0, 0.0);
    };
    if h.iter().any(|v| v.abs() > max_servo_speed) {
        return clamp_to_servo_limits(base.0, base.1, gear, max_servo_speed);
    }
    let mut k: f64 = 1.0;
    for j in 0..2 {
        if c[j] > 0.0 {
            k = k.min((budget - h[j]) / c[j]);
        } else if c[j] < 0.0 {
            k = k.min((budget + h[j]) / -c[j]);
        }
    }
    let k = k.max(0.0);
    (base.0 + k * extra.0, base.1 + k * extra.1)
}

/// Regularization of the gimbal-rate solve near gimbal lock.
pub const GIMBAL_LOCK_DAMPING: f64 = 1e-3;

/// Gimbal rates that turn the rotor axis at `w` (world) relative to the
/// shell.
///
/// Only the part of `w` that moves the spin axis matters, so this is the
/// damped least-squares solution of `(a e_o + b e_i - w) x s = 0` with `e_o`,
/// `e_i` the gimbal axes and `s` the spin axis. Because `e_i` is always
/// perpendicular to `s` and to `e_o`, the normal equations are diagonal.
pub fn gimbal_rates_for_precession(params: &RobotParams, state: &RobotState, w: &Vec3) -> (f64, f64) {
    let s = rotor_axis_world(params, state);
    let (outer, inner) = gimbal_axes_world(params, state);
    let r = w.cross(&s);
    let a = outer.cross(&s);
    let b = inner.cross(&s);
    (
        a.dot(&r) / (a.norm_squared() + GIMBAL_LOCK_DAMPING),
        b.dot(&r) / (b.norm_squared() + GIMBAL_LOCK_DAMPING),
    )
}

/// Precession of the rotor axis (world) asked for by a command.
fn commanded_precession(cmd: &DriveCommand, params: &RobotParams, state: &RobotState, config: &ControllerConfig) -> Vec3 {
    let up = up_direction(params);
    let axis = rolling_axis(params, state);
    let wanted = axis * cmd.forward + up * cmd.turn;
    let spin = if state.rotor_speed < 0.0 { -1.0 } else { 1.0 };
    let s = rotor_axis_world(params, state) * spin;
    wanted.cross(&s) * config.max_precession_rate_rad_s
}

/// Gimbal rate targets `(alpha_rate, beta_rate)` for an operator command.
///
/// The wanted shell torque is `d = forward * rolling_axis + turn * up`. The
/// rotor axis is precessed at `d x s` (with `s` the signed spin direction),
/// whose reaction `-(w x L)` is parallel to `d` whenever `d` is
/// perpendicular to `s`. The rates are linear in the command before the
/// servo limit scales them, so the map is odd and continuous. The servo
/// limit is applied through `params.gear`, so its convention decides which
/// servo saturates first.
///
/// These are rates relative to the shell; see [`inertial_hold_rates`] for
/// the term that cancels the shell's own rotation.
pub fn command_to_gimbal_targets(
    cmd: &DriveCommand,
    params: &RobotParams,
    state: &RobotState,
    config: &ControllerConfig,
) -> (f64, f64) {
    let cmd = cmd.clamped();
    if cmd.forward == 0.0 && cmd.turn == 0.0 {
        return (0.0, 0.0);
    }
    // odd symmetry is enforced by evaluating the positive half-space only
    if cmd.forward < 0.0 || (cmd.forward == 0.0 && cmd.turn < 0.0) {
        let (a, b) = command_to_gimbal_targets(&cmd.negated(), params, state, config);
        return (-a, -b);
    }
    let w = commanded_precession(&cmd, params, state, config);
    let (a, b) = gimbal_rates_for_precession(params, state, &w);
    clamp_to_servo_limits(a, b, &params.gear, params.servo.max_speed_rad_s)
}

/// Gimbal rates that keep the spin axis fixed in space while the shell
/// turns.
///
/// Without this term the rotor is locked to the shell and the robot is a
/// rigid gyrostat: rolling about any axis across the spin axis turns the
/// rotor momentum, and the reaction comes back as yaw and nutation instead
/// of travel. With it the outer ring counter-rotates at the rolling rate.
pub fn inertial_hold_rates(params: &RobotParams, state: &RobotState) -> (f64, f64) {
    gimbal_rates_for_precession(params, state, &-state.shell_omega_world())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirGauge {
    /// Angle between rotor spin axis and rolling axis, in [0, pi].
    pub theta_res_rad: f64,
    /// `sin(theta_res)`, or 0 when the rotor is stopped.
    pub fraction: f64,
    /// Set when the rotor is not spinning.
    pub rotor_stopped: bool,
}

pub fn reservoir_gauge(params: &RobotParams, state: &RobotState, rolling_axis: &Vec3) -> ReservoirGauge {
    let s = rotor_axis_world(params, state);
    let r = rolling_axis.normalize();
    let theta = s.cross(&r).norm().atan2(s.dot(&r));
    let stopped = state.rotor_speed.abs() < 1e-9;
    ReservoirGauge {
        theta_res_rad: theta,
        fraction: if stopped { 0.0 } else { theta.sin().clamp(0.0, 1.0) },
        rotor_stopped: stopped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumDriveModel {
    pub hull_radius_m: f64,
    pub weight_mass_kg: f64,
    pub weight_offset_m: f64,
    /// Largest angle between the vertical and the weight's arm.
    pub max_tilt_angle_rad: f64,
}

impl PendulumDriveModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.hull_radius_m > 0.0
            && self.weight_mass_kg >= 0.0
            && self.weight_offset_m > 0.0
            && self.weight_offset_m < self.hull_radius_m
            && (0.0..=FRAC_PI_2).contains(&self.max_tilt_angle_rad);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid pendulum model: {self:?}")))
        }
    }
}

pub fn pendulum_max_static_torque(model: &PendulumDriveModel, g: f64) -> f64 {
    model.weight_mass_kg * g * model.weight_offset_m * model.max_tilt_angle_rad.sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirComparison {
    pub gyro_torque_nm: f64,
    pub pendulum_torque_nm: f64,
    /// Gyro over pendulum.
    pub ratio: f64,
}

pub fn reservoir_vs_pendulum_report(
    params: &RobotParams,
    model: &PendulumDriveModel,
    rotor_speed_rad_s: f64,
    gimbal_rate_rad_s: f64,
    theta_res_rad: f64,
) -> Result<ReservoirComparison> {
    model.validate()?;
    if !(rotor_speed_rad_s > 0.0 && gimbal_rate_rad_s > 0.0) {
        return Err(Error::InvalidParameter("rotor speed and gimbal rate must be positive".into()));
    }
    let gyro = params.rotor_spin_inertia() * rotor_speed_rad_s * gimbal_rate_rad_s * theta_res_rad.sin().abs();
    let pendulum = pendulum_max_static_torque(model, params.gravity().norm());
    Ok(ReservoirComparison {
        gyro_torque_nm: gyro,
        pendulum_torque_nm: pendulum,
        ratio: gyro / pendulum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryStrategy {
    /// Swing the rotor back home while rolling; ground friction absorbs the
    /// reaction.
    FrictionPrecess,
    /// Rock the egg onto its long side, then swing home.
    LongAxisRock,
    /// Spin down, re-home the gimbal, spin up.
    StopAndReset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ManeuverAction {
    Hold,
    GimbalRates { alpha_rad_s: f64, beta_rad_s: f64 },
    GimbalTarget { alpha_rad: f64, beta_rad: f64 },
    /// Precess the spin axis in world space toward the horizontal direction
    /// perpendicular to the rolling axis, holding it inertially otherwise.
    Realign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverStep {
    pub start_s: f64,
    pub duration_s: f64,
    pub action: ManeuverAction,
    pub rotor_target_rad_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScript {
    pub strategy: RecoveryStrategy,
    pub steps: Vec<ManeuverStep>,
}

impl RecoveryScript {
    pub fn duration_s(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.start_s + s.duration_s)
    }

    pub fn step_at(&self, t: f64) -> Option<&ManeuverStep> {
        self.steps.iter().find(|s| t >= s.start_s && t < s.start_s + s.duration_s)
    }
}

/// Fraction above which no recovery is planned.
pub const RECOVERY_THRESHOLD: f64 = 0.999;
const SETTLE_S: f64 = 0.5;
const ROCK_CYCLES: usize = 4;
const ROCK_HALF_PERIOD_S: f64 = 0.4;

/// Plan a maneuver that refills the reservoir.
///
/// `preferred` picks the strategy; without one, ellipsoidal shells rock on
/// the long axis and spheres use friction. Long-axis rocking is never
/// planned for a sphere.
pub fn recovery_planner(
    params: &RobotParams,
    state: &RobotState,
    config: &ControllerConfig,
    preferred: Option<RecoveryStrategy>,
) -> RecoveryScript {
    let gauge = reservoir_gauge(params, state, &rolling_axis(params, state));
    let mut strategy = preferred.unwrap_or(if params.is_spherical() {
        RecoveryStrategy::FrictionPrecess
    } else {
        RecoveryStrategy::LongAxisRock
    });
    if strategy == RecoveryStrategy::LongAxisRock && params.is_spherical() {
        strategy = RecoveryStrategy::FrictionPrecess;
    }
    if gauge.fraction >= RECOVERY_THRESHOLD && !gauge.rotor_stopped {
        return RecoveryScript { strategy, steps: Vec::new() };
    }

    let setpoint = params.rotor_drive.target_speed_rad_s;
    let home = ManeuverAction::GimbalTarget {
        alpha_rad: config.home_alpha_rad,
        beta_rad: config.home_beta_rad,
    };
    let travel = crate::gear::wrap_angle(config.home_alpha_rad - state.gimbal.alpha)
        .abs()
        .max(crate::gear::wrap_angle(config.home_beta_rad - state.gimbal.beta).abs());
    let homing_s = travel / config.recovery_rate_rad_s + SETTLE_S;

    let mut steps = Vec::new();
    let mut t = 0.0;
    let mut push = |duration_s: f64, action: ManeuverAction, rotor_target_rad_s: f64| {
        steps.push(ManeuverStep {
            start_s: t,
            duration_s,
            action,
            rotor_target_rad_s,
        });
        t += duration_s;
    };
    match strategy {
        RecoveryStrategy::FrictionPrecess if config.inertial_hold => {
            push(std::f64::consts::FRAC_PI_2 / config.recovery_rate_rad_s + SETTLE_S, ManeuverAction::Realign, setpoint)
        }
        RecoveryStrategy::FrictionPrecess => push(homing_s, home, setpoint),
        RecoveryStrategy::LongAxisRock => {
            for k in 0..2 * ROCK_CYCLES {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                push(
                    ROCK_HALF_PERIOD_S,
                    ManeuverAction::GimbalRates {
                        alpha_rad_s: sign * config.recovery_rate_rad_s,
                        beta_rad_s: 0.0,
                    },
                    setpoint,
                );
            }
            push(homing_s, home, setpoint);
        }
        RecoveryStrategy::StopAndReset => {
            let spin = params.rotor_spin_inertia();
            let torque = params.rotor_drive.max_torque_nm;
            let spin_down = spin * state.rotor_speed.abs() / torque + 10.0 * spin / params.rotor_drive.speed_gain_nms_per_rad;
            let spin_up = spin * setpoint / torque + 10.0 * spin / params.rotor_drive.speed_gain_nms_per_rad;
            push(spin_down, ManeuverAction::Hold, 0.0);
            push(homing_s, home, 0.0);
            push(spin_up, ManeuverAction::Hold, setpoint);
        }
    }
    RecoveryScript { strategy, steps }
}

/// World precession that turns the spin axis to the nearest direction
/// perpendicular to the rolling axis, or toward vertical when the two are
/// nearly parallel. A vertical spin axis is perpendicular to every
/// horizontal rolling axis and the tilt reacts as yaw.
fn realign_precession(params: &RobotParams, state: &RobotState, config: &ControllerConfig) -> Vec3 {
    let up = up_direction(params);
    let s = rotor_axis_world(params, state);
    let r = rolling_axis(params, state);
    let mut goal = s - r * s.dot(&r);
    if goal.norm() < 0.3 {
        goal = if s.dot(&up) >= 0.0 { up } else { -up };
    }
    goal.normalize_mut();
    let turn = s.cross(&goal);
    let angle = turn.norm().atan2(s.dot(&goal));
    if angle < 1e-9 {
        return Vec3::zeros();
    }
    let rate = (config.target_gain_per_s * angle).min(config.recovery_rate_rad_s);
    turn * (rate / turn.norm())
}

/// What the controller wants this tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    pub alpha_rate_rad_s: f64,
    pub beta_rate_rad_s: f64,
    pub rotor_target_rad_s: f64,
    /// Operator command after watchdog and clamping.
    pub command: DriveCommand,
    pub recovering: Option<RecoveryStrategy>,
}

#[derive(Debug, Clone, PartialEq)]
struct ActiveScript {
    script: RecoveryScript,
    started_s: f64,
}

/// Deterministic controller stepped by the simulation loop. The latest
/// command wins.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub config: ControllerConfig,
    command: DriveCommand,
    script: Option<ActiveScript>,
    /// Last time the shell was seen touching the ground.
    last_supported_s: f64,
}

impl Controller {
    pub fn new(config: ControllerConfig) -> Self {
        Self {
            config,
            command: DriveCommand::new(0.0, 0.0, f64::NEG_INFINITY),
            script: None,
            last_supported_s: f64::NEG_INFINITY,
        }
    }

    /// Report whether the shell touches the ground. Without support there
    /// is nothing to roll on, so the hold is released and commands precess
    /// the rotor relative to the shell.
    pub fn sense_contact(&mut self, touching: bool, now_s: f64) {
        if touching {
            self.last_supported_s = now_s;
        }
    }

    /// True until the shell has been off the ground for [`SUPPORT_LOSS_S`],
    /// so a brief hop does not count. False before the first report.
    pub fn supported(&self, now_s: f64) -> bool {
        now_s - self.last_supported_s < SUPPORT_LOSS_S
    }

    pub fn set_command(&mut self, cmd: DriveCommand) {
        self.command = cmd.clamped();
    }

    pub fn last_command(&self) -> DriveCommand {
        self.command
    }

    pub fn start_recovery(&mut self, script: RecoveryScript, now_s: f64) {
        self.script = (!script.steps.is_empty()).then_some(ActiveScript { script, started_s: now_s });
    }

    pub fn recovering(&self) -> bool {
        self.script.is_some()
    }

    pub fn step(&mut self, params: &RobotParams, state: &RobotState, now_s: f64) -> ControlOutput {
        let command = self.command.effective(now_s, self.config.watchdog_s);
        let setpoint = params.rotor_drive.target_speed_rad_s;
        if let Some(active) = &self.script {
            let local = now_s - active.started_s;
            if let Some(step) = active.script.step_at(local) {
                let (a, b) = match step.action {
                    ManeuverAction::Hold => (0.0, 0.0),
                    ManeuverAction::GimbalRates { alpha_rad_s, beta_rad_s } => (alpha_rad_s, beta_rad_s),
                    ManeuverAction::GimbalTarget { alpha_rad, beta_rad } => {
                        let k = self.config.target_gain_per_s;
                        let lim = self.config.recovery_rate_rad_s;
                        let ea = crate::gear::wrap_angle(alpha_rad - state.gimbal.alpha);
                        let eb = crate::gear::wrap_angle(beta_rad - state.gimbal.beta);
                        ((k * ea).clamp(-lim, lim), (k * eb).clamp(-lim, lim))
                    }
                    ManeuverAction::Realign => {
                        let w = realign_precession(params, state, &self.config);
                        let hold = inertial_hold_rates(params, state);
                        let drive = gimbal_rates_for_precession(params, state, &w);
                        let max = params.servo.max_speed_rad_s;
                        add_within_servo_limits(hold, drive, &params.gear, max, max * self.config.drive_budget)
                    }
                };
                let (a, b) = clamp_to_servo_limits(a, b, &params.gear, params.servo.max_speed_rad_s);
                return ControlOutput {
                    alpha_rate_rad_s: a,
                    beta_rate_rad_s: b,
                    rotor_target_rad_s: step.rotor_target_rad_s,
                    command,
                    recovering: Some(active.script.strategy),
                };
            }
            self.script = None;
        }
        let (a, b) = if command.is_stale(now_s, self.config.watchdog_s) {
            (0.0, 0.0)
        } else if self.config.inertial_hold && self.supported(now_s) {
            let hold = inertial_hold_rates(params, state);
            let w = commanded_precession(&command, params, state, &self.config);
            let drive = gimbal_rates_for_precession(params, state, &w);
            let max = params.servo.max_speed_rad_s;
            add_within_servo_limits(hold, drive, &params.gear, max, max * self.config.drive_budget)
        } else {
            command_to_gimbal_targets(&command, params, state, &self.config)
        };
        ControlOutput {
            alpha_rate_rad_s: a,
            beta_rate_rad_s: b,
            rotor_target_rad_s: setpoint,
            command,
            recovering: None,
        }
    }
}

impl Default for Controller {
    fn default() -> Self {
        Self::new(ControllerConfig::default())
    }
}

/// Default starting state: gimbal at home, rotor at its setpoint.
pub fn home_state(config: &ControllerConfig) -> RobotState {
    RobotState {
        gimbal: GimbalAngles::new(config.home_alpha_rad, config.home_beta_rad, 0.0, 0.0),
        rotor_speed: ROTOR_SETPOINT_RAD_S,
        ..Default::default()
    }
}
