use std::sync::OnceLock;

use gyroegg_core::batch::{run_batch, run_batch_sequential, seed_sweep};
use gyroegg_core::control::DriveCommand;
use gyroegg_core::harness::*;
use gyroegg_core::Error;

fn scenario(text: &str) -> Scenario {
    ScenarioConfig::from_toml(text).unwrap().resolve().unwrap()
}

fn run(text: &str) -> RunOutcome {
    run_to_writer(scenario(text), std::io::sink()).unwrap()
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn rolling_rate(f: &TelemetryFrame) -> f64 {
    dot(f.angular_velocity_world_rad_s, f.rolling_axis)
}

const FORWARD: &str = r#"
duration_s = 4.0
seed = 3
[[commands]]
t_s = 0.0
forward = 1.0
"#;

fn forward_run() -> &'static RunOutcome {
    static RUN: OnceLock<RunOutcome> = OnceLock::new();
    RUN.get_or_init(|| run(FORWARD))
}

#[test]
fn sphere_rests_without_drift() {
    let sc = scenario("robot = \"sphere\"\nduration_s = 5.0\nseed = 1\n");
    let weight = sc.params.total_mass() * 9.81;
    let out = run_to_writer(sc, std::io::sink()).unwrap();
    assert_eq!(out.status, RunStatus::Completed);
    let first = &out.frames[0];
    for f in &out.frames {
        assert!((f.contact.normal_force_n - weight).abs() < 0.01 * weight, "{}", f.contact.normal_force_n);
        let dx = f.position_m[0] - first.position_m[0];
        let dy = f.position_m[1] - first.position_m[1];
        assert!(dx.hypot(dy) < 1e-6, "drift at {}", f.time_s);
    }
}

#[test]
fn forward_rolls_forward() {
    let out = forward_run();
    assert_eq!(out.status, RunStatus::Completed);
    let first = &out.frames[0];
    // at rest the forward direction is the long axis crossed with up
    let heading = [0.0, -1.0, 0.0];
    let within_2s: Vec<_> = out.frames.iter().filter(|f| f.time_s <= 2.0).collect();
    assert!(within_2s.iter().any(|f| rolling_rate(f) > 0.5));
    let last = out.frames.last().unwrap();
    let moved = [
        last.position_m[0] - first.position_m[0],
        last.position_m[1] - first.position_m[1],
        0.0,
    ];
    assert!(dot(moved, heading) > 0.5, "{moved:?}");
}

#[test]
fn reverse_rolls_backward() {
    let out = run(&FORWARD.replace("forward = 1.0", "forward = -1.0").replace("4.0", "2.0"));
    assert!(out.frames.iter().any(|f| rolling_rate(f) < -0.5));
    let last = out.frames.last().unwrap();
    assert!(last.position_m[1] > 0.1, "{:?}", last.position_m);
}

#[test]
fn reversing_the_command_reverses_the_roll() {
    let text = r#"
duration_s = 4.5
seed = 3
[[commands]]
t_s = 0.0
forward = 1.0
[[commands]]
t_s = 2.0
forward = -1.0
"#;
    let out = run(text);
    let before = out.frames.iter().filter(|f| f.time_s <= 2.0).map(rolling_rate).fold(f64::MIN, f64::max);
    let after = out.frames.iter().filter(|f| f.time_s > 2.0).map(rolling_rate).fold(f64::MAX, f64::min);
    assert!(before > 0.5 && after < -0.5, "{before} {after}");
}

#[test]
fn energy_is_accounted_for() {
    let out = forward_run();
    for f in &out.frames {
        let scale = f.energy.mechanical_j.abs().max(1.0);
        assert!(f.energy.balance_error_j.abs() < 0.01 * scale, "{} J at {}", f.energy.balance_error_j, f.time_s);
    }
}

#[test]
fn steady_roll_is_nearly_pure_rolling() {
    let mut residuals: Vec<f64> = forward_run()
        .frames
        .iter()
        .filter(|f| f.time_s >= 1.0)
        .filter_map(|f| f.contact.rolling_residual_m_s)
        .collect();
    residuals.sort_by(f64::total_cmp);
    let median = residuals[residuals.len() / 2];
    assert!(median < 1e-3, "median residual {median}");
}

#[test]
fn rotor_holds_speed_through_maneuvers() {
    let text = r#"
duration_s = 4.0
seed = 3
[[commands]]
t_s = 0.0
forward = 1.0
[[commands]]
t_s = 1.0
forward = -1.0
turn = 0.5
[[commands]]
t_s = 2.0
forward = 1.0
turn = -1.0
[[commands]]
t_s = 3.0
forward = -1.0
turn = 1.0
"#;
    let setpoint = 3000.0 * std::f64::consts::TAU / 60.0;
    let mut sim = Simulation::new(scenario(text)).unwrap();
    let mut moved = false;
    while !sim.finished() {
        sim.step().unwrap();
        let s = sim.state();
        moved |= s.gimbal.alpha_rate.abs() > 1.0;
        assert!((s.rotor_speed - setpoint).abs() < 0.01 * setpoint, "{} at {}", s.rotor_speed, sim.time_s());
    }
    assert!(moved);
}

#[test]
fn friction_stays_in_the_cone() {
    let sc = scenario(FORWARD);
    let mu = sc.ground.as_ref().unwrap().mu_static;
    let mut sim = Simulation::new(sc).unwrap();
    while !sim.finished() {
        sim.step().unwrap();
        let c = sim.contact();
        let f = c.friction_force_n;
        let t = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
        assert!(t <= mu * c.normal_force_n * (1.0 + 1e-12) + 1e-12);
    }
}

#[test]
fn watchdog_zeroes_gimbal_rates() {
    let sc = scenario("mode = \"teleop\"\nduration_s = 2.0\n");
    let mut sim = Simulation::new(sc).unwrap();
    sim.submit_command(DriveCommand::new(1.0, 0.3, 0.0));
    while sim.time_s() < 0.3 {
        sim.step().unwrap();
    }
    let out = sim.last_output();
    assert!(out.alpha_rate_rad_s != 0.0 || out.beta_rate_rad_s != 0.0);
    while sim.time_s() < 0.55 {
        sim.step().unwrap();
    }
    assert_eq!(sim.last_output().alpha_rate_rad_s, 0.0);
    assert_eq!(sim.last_output().beta_rate_rad_s, 0.0);
}

#[test]
fn logs_are_byte_identical() {
    let text = FORWARD.replace("4.0", "0.5");
    let mut a = Vec::new();
    let mut b = Vec::new();
    run_to_writer(scenario(&text), &mut a).unwrap();
    run_to_writer(scenario(&text), &mut b).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let mut c = Vec::new();
    run_to_writer(scenario(&text.replace("seed = 3", "seed = 4")), &mut c).unwrap();
    assert_ne!(a, c);
}

#[test]
fn log_reads_back() {
    let mut buf = Vec::new();
    let out = run_to_writer(scenario("duration_s = 0.2\nseed = 9\n"), &mut buf).unwrap();
    let records = read_log(buf.as_slice()).unwrap();
    assert!(matches!(records[0], LogRecord::Header { seed: 9, .. }));
    assert!(matches!(records.last().unwrap(), LogRecord::End { status: RunStatus::Completed, .. }));
    assert_eq!(records.len(), out.frames.len() + 2);
    for line in buf.split(|b| *b == b'\n').filter(|l| !l.is_empty()) {
        assert!(!line.contains(&b'\r'));
    }
}

#[test]
fn csv_round_trip() {
    let frames = &forward_run().frames[..20];
    let mut bytes = Vec::new();
    export_csv(frames, None, &mut bytes).unwrap();
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header = reader.headers().unwrap().clone();
    assert!(header.iter().any(|h| h == "alpha_rad"));
    assert!(header.iter().any(|h| h == "time_s"));
    let alpha = header.iter().position(|h| h == "alpha_rad").unwrap();
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), frames.len());
    for (row, f) in rows.iter().zip(frames) {
        assert_eq!(row[alpha].parse::<f64>().unwrap(), f.alpha_rad);
    }

    let mut empty = Vec::new();
    export_csv(&[], Some(&["time_s".into(), "alpha_rad".into()]), &mut empty).unwrap();
    assert_eq!(String::from_utf8(empty).unwrap().lines().count(), 1);

    let err = export_csv(frames, Some(&["alpha".into()]), Vec::new()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("alpha") && msg.contains("alpha_rad"), "{msg}");
}

#[test]
fn stiff_ground_aborts_as_unstable() {
    let text = "duration_s = 1.0\ndt_s = 1e-3\nseed = 1\n[ground]\nstiffness_n_m = 1e12\n";
    let mut buf = Vec::new();
    let out = run_to_writer(scenario(text), &mut buf).unwrap();
    assert_eq!(out.status, RunStatus::Unstable);
    assert_eq!(out.status.exit_code(), 2);
    let records = read_log(buf.as_slice()).unwrap();
    assert!(matches!(records.last().unwrap(), LogRecord::End { status: RunStatus::Unstable, message: Some(_), .. }));
}

#[test]
fn empty_battery_ends_the_run() {
    let text = "duration_s = 30.0\nseed = 1\n[battery]\ncharge_ah = 0.002\n";
    let out = run(text);
    assert_eq!(out.status, RunStatus::BatteryDepleted);
    assert_eq!(out.status.exit_code(), 3);
    assert!(out.frames.last().unwrap().time_s < 30.0);
}

#[test]
fn invalid_configs_list_every_problem() {
    let text = "robot = \"proto9\"\nduration_s = -1.0\ndt_s = 0.5\n";
    match ScenarioConfig::from_toml(text).unwrap().resolve() {
        Err(Error::Config(problems)) => assert!(problems.len() >= 4, "{problems:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn friction_precess_refills_the_reservoir() {
    let text = r#"
duration_s = 8.0
seed = 1
[ground]
mu_static = 1.2
mu_kinetic = 1.0
[[commands]]
t_s = 0.0
forward = 1.0
[[commands]]
t_s = 3.3
recover = "friction-precess"
"#;
    let out = run(text);
    let start = out.frames.iter().find(|f| f.time_s >= 3.3).unwrap();
    assert!(start.reservoir.fraction < 0.5, "{}", start.reservoir.fraction);
    let end_s = out.frames.iter().filter(|f| f.time_s > 3.3 && f.command.recovering.is_some()).map(|f| f.time_s).fold(0.0, f64::max);
    let end = out.frames.iter().find(|f| f.time_s >= end_s).unwrap();
    assert!(end.reservoir.fraction >= start.reservoir.fraction + 0.1, "{} -> {}", start.reservoir.fraction, end.reservoir.fraction);
}

#[test]
fn seed_sweep_is_order_independent() {
    let cfg = ScenarioConfig::from_toml(&FORWARD.replace("4.0", "0.3")).unwrap();
    let scenarios = seed_sweep(&cfg, &[1, 2, 3, 4]).unwrap();
    let par: Vec<_> = run_batch(&scenarios).into_iter().map(|r| r.unwrap()).collect();
    let seq: Vec<_> = run_batch_sequential(&scenarios).into_iter().map(|r| r.unwrap()).collect();
    assert_eq!(par, seq);
    assert_ne!(par[0].log_sha256, par[1].log_sha256);
}
