//! The step loop shared by batch runs and the live server.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Mode, Scenario};
use super::telemetry::{BatteryStatus, CommandEcho, ContactSummary, EnergyStatus, TelemetryFrame};
use crate::contact::{contact_wrench, rolling_residual, ContactResult};
use crate::control::{
    gyro_torque_on_shell, recovery_planner, reservoir_gauge, rolling_axis, ControlOutput, Controller, DriveCommand,
};
use crate::dynamics::{
    accelerations, dynamics_step_report, kinetic_energy, potential_energy, ActuationInput, Wrench,
    RobotState,
};
use crate::error::{Error, Result};
use crate::gear::{gimbal_to_servo, rotor_speed_control, servo_to_gimbal, servo_track, RotorDrive, ServoAngles};
use crate::power::{
    motor_electrical_power_w, power_step, servo_current_a, BatteryPack, LoadProfile, LOGIC_CURRENT_A,
};
use crate::rotation::quat_to_wxyz;
use crate::sensor::{imu_read, AttitudeFilter, ImuSample};

/// Running energy bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub initial_j: f64,
    pub actuator_work_j: f64,
    pub loss_work_j: f64,
    pub external_work_j: f64,
}

pub struct Simulation {
    pub scenario: Scenario,
    state: RobotState,
    tick: u64,
    controller: Controller,
    servo_position: [f64; 2],
    servo_target: [f64; 2],
    servo_torque: [f64; 2],
    rng: ChaCha8Rng,
    pack: BatteryPack,
    pack_current_a: f64,
    energy: EnergyLedger,
    imu_hull: ImuSample,
    imu_inner: ImuSample,
    filter: AttitudeFilter,
    sensor_stride: u64,
    telemetry_stride: u64,
    /// Dynamics substeps per control step, chosen so the friction ramp stays
    /// inside the stable region of RK4.
    substeps: u32,
    next_command: usize,
    held: Option<DriveCommand>,
    client_timestamp_s: f64,
    last_output: ControlOutput,
    rotor_torque_nm: f64,
}

/// Relative energy-balance error treated as a numerical blow-up.
const ENERGY_DIVERGENCE: f64 = 0.1;

fn stride(rate_hz: f64, dt: f64) -> u64 {
    ((1.0 / (rate_hz * dt)).round() as u64).max(1)
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let state = scenario.initial.clone();
        let servos = gimbal_to_servo(&state.gimbal, &scenario.params.gear)?;
        let servo = [servos.gamma_s1, servos.gamma_s2];
        let mut controller = Controller::new(scenario.controller.clone());
        let last_output = controller.step(&scenario.params, &state, 0.0);
        let mut sim = Self {
            sensor_stride: stride(scenario.imu_hull.sample_rate_hz, scenario.dt_s),
            telemetry_stride: stride(scenario.telemetry_rate_hz, scenario.dt_s),
            substeps: scenario
                .ground
                .as_ref()
                .map_or(1, |g| (g.friction_rate_per_s(&scenario.params) * scenario.dt_s / 2.0).ceil().max(1.0) as u32),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            pack: scenario.battery.clone(),
            filter: AttitudeFilter {
                estimate: state.orientation,
                ..Default::default()
            },
            state,
            tick: 0,
            controller,
            servo_position: servo,
            servo_target: servo,
            servo_torque: [0.0; 2],
            pack_current_a: 0.0,
            energy: EnergyLedger::default(),
            imu_hull: ImuSample::default(),
            imu_inner: ImuSample::default(),
            next_command: 0,
            held: None,
            client_timestamp_s: 0.0,
            last_output,
            rotor_torque_nm: 0.0,
            scenario,
        };
        sim.energy.initial_j = sim.mechanical_energy();
        sim.sample_sensors()?;
        Ok(sim)
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn substeps(&self) -> u32 {
        self.substeps
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time_s(&self) -> f64 {
        self.tick as f64 * self.scenario.dt_s
    }

    pub fn pack(&self) -> &BatteryPack {
        &self.pack
    }

    pub fn energy(&self) -> EnergyLedger {
        self.energy
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn last_output(&self) -> &ControlOutput {
        &self.last_output
    }

    /// True on ticks where a telemetry frame is due.
    pub fn frame_due(&self) -> bool {
        self.tick % self.telemetry_stride == 0
    }

    pub fn finished(&self) -> bool {
        self.scenario.mode == Mode::Scripted && self.time_s() >= self.scenario.duration_s - 0.5 * self.scenario.dt_s
    }

    pub fn battery_alive(&self) -> bool {
        self.pack.alive()
    }

    /// Live operator command. Its age is measured in simulation time from
    /// now; `timestamp_s` is kept for the echo only.
    pub fn submit_command(&mut self, cmd: DriveCommand) {
        self.client_timestamp_s = cmd.timestamp_s;
        self.controller
            .set_command(DriveCommand::new(cmd.forward, cmd.turn, self.time_s()));
    }

    pub fn start_recovery(&mut self, strategy: Option<crate::control::RecoveryStrategy>) {
        let script = recovery_planner(&self.scenario.params, &self.state, &self.scenario.controller, strategy);
        let now = self.time_s();
        self.controller.start_recovery(script, now);
    }

    fn ground_wrench(&self, state: &RobotState) -> (Wrench, ContactResult) {
        match &self.scenario.ground {
            Some(g) => contact_wrench(g, &self.scenario.params, state),
            None => (Wrench::default(), ContactResult::separated()),
        }
    }

    pub fn contact(&self) -> ContactResult {
        self.ground_wrench(&self.state).1
    }

    /// Kinetic plus gravitational plus contact-spring energy.
    pub fn mechanical_energy(&self) -> f64 {
        let p = &self.scenario.params;
        let spring = match &self.scenario.ground {
            Some(g) => self.contact().spring_energy_j(g),
            None => 0.0,
        };
        kinetic_energy(p, &self.state) + potential_energy(p, &self.state) + spring
    }

    /// Energy dissipated so far: joint losses plus whatever the ground
    /// removed (its work less the change in stored spring energy).
    pub fn dissipated_j(&self) -> f64 {
        let spring_now = match &self.scenario.ground {
            Some(g) => self.contact().spring_energy_j(g),
            None => 0.0,
        };
        let p = &self.scenario.params;
        let spring_start = self.energy.initial_j
            - kinetic_energy(p, &self.scenario.initial)
            - potential_energy(p, &self.scenario.initial);
        self.energy.loss_work_j - self.energy.external_work_j - (spring_now - spring_start)
    }

    /// `E(t) + dissipated - injected - E(0)`; zero up to integration error.
    pub fn energy_balance_error_j(&self) -> f64 {
        self.mechanical_energy() + self.dissipated_j() - self.energy.actuator_work_j - self.energy.initial_j
    }

    fn apply_script(&mut self) {
        if self.scenario.mode != Mode::Scripted {
            return;
        }
        let now = self.time_s();
        while let Some(c) = self.scenario.commands.get(self.next_command) {
            if c.t_s > now + 0.5 * self.scenario.dt_s {
                break;
            }
            match c.recover {
                Some(strategy) => {
                    self.held = None;
                    self.start_recovery(Some(strategy));
                }
                None => self.held = Some(DriveCommand::new(c.forward, c.turn, c.t_s)),
            }
            self.next_command += 1;
        }
        // scripted commands hold until replaced, so they never go stale
        if let Some(h) = self.held {
            self.client_timestamp_s = h.timestamp_s;
            self.controller.set_command(DriveCommand::new(h.forward, h.turn, now));
        }
    }

    /// Advance one step of `dt`.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.scenario.dt_s;
        let now = self.time_s();
        self.apply_script();
        let params = &self.scenario.params;
        let alive = self.pack.alive();

        let touching = self.contact().active;
        self.controller.sense_contact(touching, now);
        let mut out = self.controller.step(params, &self.state, now);
        if !alive {
            out.alpha_rate_rad_s = 0.0;
            out.beta_rate_rad_s = 0.0;
        }
        let targets = gimbal_to_servo(
            &crate::gear::GimbalAngles {
                alpha_rate: out.alpha_rate_rad_s,
                beta_rate: out.beta_rate_rad_s,
                ..Default::default()
            },
            &params.gear,
        )?;
        let mut rates = [0.0; 2];
        for (k, target_rate) in [targets.gamma_s1_rate, targets.gamma_s2_rate].into_iter().enumerate() {
            self.servo_target[k] += target_rate * dt;
            let (next, _) = servo_track(&params.servo, self.servo_position[k], self.servo_target[k], target_rate, dt);
            rates[k] = (next - self.servo_position[k]) / dt;
            self.servo_position[k] = next;
        }
        let gimbal = servo_to_gimbal(
            &ServoAngles {
                gamma_s1_rate: rates[0],
                gamma_s2_rate: rates[1],
                ..Default::default()
            },
            &params.gear,
        )?;
        let drive = RotorDrive {
            target_speed_rad_s: out.rotor_target_rad_s,
            ..params.rotor_drive
        };
        let drag = params.rotor_drag_nms_per_rad * drive.target_speed_rad_s;
        self.rotor_torque_nm = if alive { rotor_speed_control(&drive, self.state.rotor_speed, drag) } else { 0.0 };
        let input = ActuationInput::rates(gimbal.alpha_rate, gimbal.beta_rate, self.rotor_torque_nm);

        let ground = self.scenario.ground.clone();
        let free = Wrench::default();
        let source: &dyn crate::dynamics::WrenchSource = match &ground {
            Some(g) => g,
            None => &free,
        };
        let h = dt / self.substeps as f64;
        for _ in 0..self.substeps {
            let report = dynamics_step_report(params, &self.state, &input, source, h).map_err(|e| match e {
                Error::Unstable { reason, state, .. } => Error::Unstable { time: now, reason, state },
                other => other,
            })?;
            self.energy.actuator_work_j += report.actuator_work_j;
            self.energy.loss_work_j += report.loss_work_j;
            self.energy.external_work_j += report.external_work_j;
            self.state = report.state;
        }
        self.last_output = out;
        self.tick += 1;

        if self.tick % self.sensor_stride == 0 {
            self.sample_sensors()?;
            let sensor_dt = self.sensor_stride as f64 * dt;
            self.update_power(sensor_dt, &input)?;
            let error = self.energy_balance_error_j();
            let scale = self.energy.initial_j.abs().max(self.energy.actuator_work_j.abs()).max(1.0);
            if error.abs() > ENERGY_DIVERGENCE * scale {
                return Err(Error::Unstable {
                    time: self.time_s(),
                    reason: format!("energy balance off by {error:.3e} J"),
                    state: self.state.dump(),
                });
            }
        }
        Ok(())
    }

    fn sample_sensors(&mut self) -> Result<()> {
        let params = &self.scenario.params;
        let input = ActuationInput::rates(
            self.state.gimbal.alpha_rate,
            self.state.gimbal.beta_rate,
            self.rotor_torque_nm,
        );
        let (wrench, _) = self.ground_wrench(&self.state);
        let acc = accelerations(params, &self.state, &input, &wrench)?;
        self.imu_hull = imu_read(&self.scenario.imu_hull, params, &self.state, &acc, &mut self.rng);
        self.imu_inner = imu_read(&self.scenario.imu_inner, params, &self.state, &acc, &mut self.rng);
        let sensor_dt = self.sensor_stride as f64 * self.scenario.dt_s;
        if self.tick > 0 {
            self.filter.update(&self.imu_hull, sensor_dt)?;
        }
        let (t1, t2) = params
            .gear
            .gimbal_torques_to_servo(acc.actuator_torques[0], acc.actuator_torques[1]);
        self.servo_torque = [t1, t2];
        Ok(())
    }

    fn update_power(&mut self, dt: f64, input: &ActuationInput) -> Result<()> {
        let params = &self.scenario.params;
        let max = params.servo.max_torque_nm;
        let load = LoadProfile {
            rail_currents_a: vec![
                servo_current_a(self.servo_torque[0] / max),
                servo_current_a(self.servo_torque[1] / max),
                LOGIC_CURRENT_A,
            ],
            motor_power_w: if self.pack.alive() {
                motor_electrical_power_w(input.rotor_torque_nm * self.state.rotor_speed)
            } else {
                0.0
            },
        };
        let step = power_step(&self.pack, &self.scenario.chain, &load, dt)?;
        self.pack = step.pack;
        self.pack_current_a = step.pack_current_a;
        Ok(())
    }

    pub fn frame(&self) -> TelemetryFrame {
        let p = &self.scenario.params;
        let s = &self.state;
        let contact = self.contact();
        let axis = rolling_axis(p, s);
        let gauge = reservoir_gauge(p, s, &axis);
        let residual = rolling_residual(p, s, &contact).ok();
        let cmd = self.last_output.command;
        let energy = self.mechanical_energy();
        TelemetryFrame {
            tick: self.tick,
            time_s: self.time_s(),
            position_m: s.position.into(),
            orientation_wxyz: quat_to_wxyz(&s.orientation),
            velocity_m_s: s.velocity.into(),
            angular_velocity_body_rad_s: s.angular_velocity.into(),
            angular_velocity_world_rad_s: s.shell_omega_world().into(),
            alpha_rad: s.gimbal.alpha,
            beta_rad: s.gimbal.beta,
            alpha_rate_rad_s: s.gimbal.alpha_rate,
            beta_rate_rad_s: s.gimbal.beta_rate,
            rotor_speed_rad_s: s.rotor_speed,
            rotor_torque_nm: self.rotor_torque_nm,
            servo_torque_nm: self.servo_torque,
            imu_hull: self.imu_hull,
            imu_inner: self.imu_inner,
            attitude_estimate_wxyz: quat_to_wxyz(&self.filter.estimate),
            contact: ContactSummary {
                active: contact.active,
                point_m: contact.point,
                penetration_m: contact.penetration_m,
                normal_force_n: contact.normal_force_n,
                friction_force_n: contact.friction_force_n,
                slip_speed_m_s: contact.slip_speed_m_s,
                rolling: contact.rolling,
                rolling_residual_m_s: residual,
            },
            rolling_axis: axis.into(),
            reservoir: gauge,
            gyro_torque_on_shell_nm: gyro_torque_on_shell(p, s).into(),
            battery: BatteryStatus {
                voltage_v: self.pack.voltage(),
                charge_ah: self.pack.charge_ah,
                state_of_charge: self.pack.state_of_charge(),
                current_a: self.pack_current_a,
                alive: self.pack.alive(),
            },
            command: CommandEcho {
                forward: cmd.forward,
                turn: cmd.turn,
                timestamp_s: self.client_timestamp_s,
                recovering: self.last_output.recovering,
                alpha_rate_rad_s: self.last_output.alpha_rate_rad_s,
                beta_rate_rad_s: self.last_output.beta_rate_rad_s,
            },
            energy: EnergyStatus {
                mechanical_j: energy,
                actuator_work_j: self.energy.actuator_work_j,
                dissipated_j: self.dissipated_j(),
                balance_error_j: self.energy_balance_error_j(),
            },
        }
    }
}

/// How a batch run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Unstable,
    BatteryDepleted,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Completed => 0,
            RunStatus::Unstable => 2,
            RunStatus::BatteryDepleted => 3,
        }
    }
}
