use std::path::Path;
use std::process::{Command, Output};

fn gyroegg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gyroegg")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn report_gears_prints_the_table() {
    let o = gyroegg(&["report", "gears"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for needle in ["0.198912", "0.414214", "0.480217", "48:23", "0.479167", "0.041421", "0.019891"] {
        assert!(text.contains(needle), "{needle} missing from\n{text}");
    }
    let o = gyroegg(&["report", "gears", "--radius", "0.1"]);
    assert!(stdout(&o).contains("0.082843"));
    let o = gyroegg(&["report", "gears", "--radius", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = gyroegg(&["report", "gears", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_power_brackets_the_runtimes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", "duration_s = 1.0\nseed = 1\n");
    let o = gyroegg(&["report", "power", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let minutes = |name: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(name)).unwrap();
        line.split_whitespace().nth(2).unwrap().parse().unwrap()
    };
    assert!((45.0..=90.0).contains(&minutes("dc_motor_only")), "{text}");
    assert!((15.0..=45.0).contains(&minutes("full_actuation")), "{text}");
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let ok = write(
        dir.path(),
        "ok.toml",
        "duration_s = 0.2\nseed = 1\n[output]\nlog = \"ok.jsonl\"\ncsv = \"ok.csv\"\ncsv_columns = [\"time_s\", \"alpha_rad\"]\n",
    );
    let o = gyroegg(&["run", &ok, "--seed", "5", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(dir.path().join("out/ok.jsonl")).unwrap();
    assert!(log.lines().next().unwrap().contains("\"seed\":5"));
    let csv = std::fs::read_to_string(dir.path().join("out/ok.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "time_s,alpha_rad");
    assert_eq!(csv.lines().count(), log.lines().count() - 1);

    let stiff = write(dir.path(), "stiff.toml", "duration_s = 1.0\ndt_s = 1e-3\nseed = 1\n[ground]\nstiffness_n_m = 1e12\n");
    assert_eq!(gyroegg(&["run", &stiff, "--out", out]).status.code(), Some(2));

    let flat = write(dir.path(), "flat.toml", "duration_s = 30.0\nseed = 1\n[battery]\ncharge_ah = 0.002\n");
    assert_eq!(gyroegg(&["run", &flat, "--out", out]).status.code(), Some(3));
}

#[test]
fn bad_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "robot = \"proto9\"\nduration_s = -1.0\ndt_s = 0.5\n");
    let o = gyroegg(&["run", &bad, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["proto9", "duration_s", "dt_s", "seed"] {
        assert!(err.contains(needle), "{needle} missing from\n{err}");
    }
    assert_eq!(gyroegg(&["run", "/nonexistent.toml"]).status.code(), Some(1));
}

#[test]
fn serve_rejects_a_taken_port() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port().to_string();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", "mode = \"teleop\"\nduration_s = 1.0\n");
    let o = gyroegg(&["serve", &cfg, "--port", &port]);
    assert_eq!(o.status.code(), Some(1));
}
